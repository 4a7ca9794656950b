#include "tissuedef/checkpoint.hpp"

#include <bit>
#include <boost/beast/core/detail/base64.hpp>
#include <cstring>

#include "tissuedef/error.hpp"
#include "tissuedef/fs_util.hpp"

namespace tissuedef {

namespace base64 = boost::beast::detail::base64;

static_assert(std::endian::native == std::endian::little, "checkpoint encoding assumes a little-endian host");

std::string base64_encode_doubles(const Tensor& t) {
  const std::size_t bytes = t.size() * sizeof(double);
  std::string out(base64::encoded_size(bytes), '\0');
  out.resize(base64::encode(out.data(), t.data().data(), bytes));
  return out;
}

std::vector<double> base64_decode_doubles(const std::string& text) {
  std::string raw(base64::decoded_size(text.size()), '\0');
  const auto [written, read] = base64::decode(raw.data(), text.data(), text.size());
  // The decoder stops at the first '=', so only padding may follow the consumed prefix.
  std::size_t body = text.size();
  while (body > 0 && text[body - 1] == '=' && text.size() - body < 2) --body;
  if (read != body || text.size() % 4 != 0) throw FormatError("invalid base64 payload");
  if (written % sizeof(double) != 0) throw FormatError("base64 payload is not a whole number of float64 values");
  std::vector<double> out(written / sizeof(double));
  std::memcpy(out.data(), raw.data(), written);
  return out;
}

nlohmann::json checkpoint_to_json(const ParamStore& params) {
  nlohmann::json doc;
  doc["format_version"] = kCheckpointFormatVersion;
  nlohmann::json& table = doc["parameters"];
  table = nlohmann::json::object();
  for (const std::string& name : params.names()) {
    const Tensor& t = params.value(name);
    table[name] = {{"shape", t.shape()}, {"data", base64_encode_doubles(t)}};
  }
  return doc;
}

ParamStore checkpoint_from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("format_version") || doc["format_version"] != kCheckpointFormatVersion) {
    throw FormatError("checkpoint: missing or unsupported format_version");
  }
  if (!doc.contains("parameters") || !doc["parameters"].is_object()) {
    throw FormatError("checkpoint: missing 'parameters' object");
  }
  ParamStore params;
  for (const auto& [name, entry] : doc["parameters"].items()) {
    if (!entry.contains("shape") || !entry.contains("data")) {
      throw FormatError("checkpoint: parameter '" + name + "' needs shape and data");
    }
    Tensor::Shape shape = entry["shape"].get<Tensor::Shape>();
    std::vector<double> data = base64_decode_doubles(entry["data"].get<std::string>());
    try {
      params.add(name, Tensor(std::move(shape), std::move(data)));
    } catch (const Error& e) {
      throw FormatError("checkpoint: parameter '" + name + "': " + e.what());
    }
  }
  return params;
}

void save_checkpoint(const ParamStore& params, const std::filesystem::path& path) {
  write_file_atomic(path, checkpoint_to_json(params).dump() + "\n");
}

ParamStore load_checkpoint(const std::filesystem::path& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("checkpoint " + path.string() + ": " + e.what());
  }
  return checkpoint_from_json(doc);
}

}  // namespace tissuedef
