#include "tissuedef/fields.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "tissuedef/checkpoint.hpp"
#include "tissuedef/error.hpp"
#include "tissuedef/fs_util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace tissuedef {

std::vector<double> encode(std::span<const double> x, const PositionalEncoding& enc) {
  std::vector<double> out;
  out.reserve(enc.output_dim(x.size()));
  if (enc.include_input) out.insert(out.end(), x.begin(), x.end());
  for (int k = 0; k < enc.frequencies; ++k) {
    const double f = std::ldexp(std::numbers::pi, k);
    for (double v : x) out.push_back(std::sin(f * v));
    for (double v : x) out.push_back(std::cos(f * v));
  }
  return out;
}

bool SceneCalibration::reference_pixel(const Vec3& normalized, Vec2& pixel) const {
  const Vec3 cam = reference_pose.apply_inverse(normalization.invert(normalized));
  if (!(cam.z() > 1e-9)) return false;
  pixel = Vec2(intrinsics.fx * cam.x() / cam.z() + intrinsics.cx, intrinsics.fy * cam.y() / cam.z() + intrinsics.cy);
  return true;
}

// ---------------------------------------------------------------------------
// Layer layout shared by initialisation and graph construction.

namespace {

enum class Init { Uniform, Geometric, GeometricSkip, GeometricOut, Zero };

struct LayerSpec {
  std::string name;
  std::vector<std::size_t> blocks;  // input widths, one weight matrix each
  std::size_t out = 0;
  double scale = 1.0;
  Init init = Init::Uniform;
};

std::vector<std::size_t> encoded_dims(std::size_t n, const PositionalEncoding& enc) {
  std::vector<std::size_t> dims;
  if (enc.include_input) dims.push_back(n);
  if (enc.frequencies > 0) dims.push_back(2 * n * enc.frequencies);
  return dims;
}

std::vector<LayerSpec> deform_specs(const FieldArchitecture& a) {
  std::vector<LayerSpec> specs;
  std::vector<std::size_t> in = encoded_dims(3, a.position);
  in.push_back(2);
  for (auto d : encoded_dims(1, a.time)) in.push_back(d);
  for (int l = 0; l < a.deform_layers; ++l) {
    specs.push_back({"deform.l" + std::to_string(l), in, static_cast<std::size_t>(a.deform_width), 1.0, Init::Uniform});
    in = {static_cast<std::size_t>(a.deform_width)};
  }
  specs.push_back({"deform.out", in, 3, 1.0, Init::Zero});
  return specs;
}

std::vector<LayerSpec> sdf_specs(const FieldArchitecture& a) {
  std::vector<LayerSpec> specs;
  const auto enc = encoded_dims(3, a.position);
  std::size_t enc_total = 0;
  for (auto d : enc) enc_total += d;
  std::vector<std::size_t> in = enc;
  for (int l = 0; l < a.sdf_layers; ++l) {
    std::size_t out = a.sdf_width;
    if (l + 1 == a.sdf_skip) out = a.sdf_width - enc_total;
    LayerSpec s{"sdf.l" + std::to_string(l), in, out, 1.0, Init::Geometric};
    if (l == a.sdf_skip) {
      s.blocks.insert(s.blocks.end(), enc.begin(), enc.end());
      s.scale = 1.0 / std::sqrt(2.0);
      s.init = Init::GeometricSkip;
    }
    specs.push_back(s);
    in = {out};
  }
  specs.push_back({"sdf.out", in, static_cast<std::size_t>(1 + a.feature_dim), 1.0, Init::GeometricOut});
  return specs;
}

std::vector<LayerSpec> radiance_specs(const FieldArchitecture& a) {
  std::vector<LayerSpec> specs;
  std::vector<std::size_t> in = {3, 3, 3, static_cast<std::size_t>(a.feature_dim)};
  for (int l = 0; l < a.radiance_layers; ++l) {
    specs.push_back({"radiance.l" + std::to_string(l), in, static_cast<std::size_t>(a.radiance_width), 1.0,
                     Init::Uniform});
    in = {static_cast<std::size_t>(a.radiance_width)};
  }
  specs.push_back({"radiance.out", in, 3, 1.0, Init::Uniform});
  return specs;
}

const std::string kLogSharpness = "render.log_sharpness";

std::string weight_name(const LayerSpec& s, std::size_t block) { return s.name + ".w" + std::to_string(block); }
std::string bias_name(const LayerSpec& s) { return s.name + ".b"; }

void init_layer(ParamStore& store, const LayerSpec& s, const FieldArchitecture& a, std::mt19937_64& rng) {
  std::size_t fan_in = 0;
  for (auto d : s.blocks) fan_in += d;
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> uni(-bound, bound);
  std::normal_distribution<double> hidden(0.0, std::sqrt(2.0) / std::sqrt(static_cast<double>(s.out)));
  std::normal_distribution<double> last(std::sqrt(std::numbers::pi) / std::sqrt(static_cast<double>(fan_in)), 1e-4);
  const bool raw_input = a.position.include_input;
  for (std::size_t b = 0; b < s.blocks.size(); ++b) {
    Tensor w({s.blocks[b], s.out}, 0.0);
    // Under geometric init only the raw coordinates (and the skip's hidden
    // part) start non-zero; frequency columns start at zero.
    bool zero_block = false;
    if (s.init == Init::Geometric && s.name == "sdf.l0") zero_block = !(raw_input && b == 0);
    if (s.init == Init::GeometricSkip) zero_block = b > 1 || (b == 1 && !raw_input);
    for (double& v : w.data()) {
      switch (s.init) {
        case Init::Uniform: v = uni(rng); break;
        case Init::Geometric:
        case Init::GeometricSkip: v = zero_block ? 0.0 : hidden(rng); break;
        case Init::GeometricOut: v = last(rng); break;
        case Init::Zero: v = 0.0; break;
      }
    }
    store.add(weight_name(s, b), std::move(w));
  }
  Tensor bias({1, s.out}, 0.0);
  if (s.init == Init::Uniform) {
    for (double& v : bias.data()) v = uni(rng);
  } else if (s.init == Init::GeometricOut) {
    bias.fill(-a.init_radius);
  }
  store.add(bias_name(s), std::move(bias));
}

// One affine layer over several input blocks, with forward tangents.
Dual dense(Graph& g, const LayerSpec& s, const std::vector<Dual>& blocks, std::size_t tangent_count) {
  if (blocks.size() != s.blocks.size()) throw ShapeError(s.name + ": block count mismatch");
  Var pre;
  std::vector<Var> dpre(tangent_count);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const Var w = g.param(weight_name(s, b));
    const Var term = g.matmul(blocks[b].value, w);
    pre = pre.valid() ? g.add(pre, term) : term;
    for (std::size_t k = 0; k < tangent_count && k < blocks[b].tangents.size(); ++k) {
      if (!blocks[b].tangents[k].valid()) continue;
      const Var dt = g.matmul(blocks[b].tangents[k], w);
      dpre[k] = dpre[k].valid() ? g.add(dpre[k], dt) : dt;
    }
  }
  if (s.scale != 1.0) {
    pre = g.scale(pre, s.scale);
    for (auto& d : dpre)
      if (d.valid()) d = g.scale(d, s.scale);
  }
  pre = g.add(pre, g.param(bias_name(s)));
  return {pre, dpre};
}

Dual softplus(Graph& g, const Dual& x, double beta) {
  Dual out{g.softplus(x.value, beta), {}};
  Var slope;
  for (const Var& t : x.tangents) {
    if (!t.valid()) {
      out.tangents.push_back(Var{});
      continue;
    }
    if (!slope.valid()) slope = g.sigmoid(x.value, beta);
    out.tangents.push_back(g.mul(t, slope));
  }
  return out;
}

std::vector<Dual> encode_blocks(Graph& g, const Dual& x, const PositionalEncoding& enc) {
  std::vector<Dual> blocks;
  if (enc.include_input) blocks.push_back(x);
  if (enc.frequencies > 0) {
    std::vector<Var> parts;
    std::vector<std::vector<Var>> dparts(x.tangents.size());
    for (int k = 0; k < enc.frequencies; ++k) {
      const double f = std::ldexp(std::numbers::pi, k);
      const Var arg = g.scale(x.value, f);
      const Var s = g.sin(arg);
      const Var c = g.cos(arg);
      parts.push_back(s);
      parts.push_back(c);
      for (std::size_t j = 0; j < x.tangents.size(); ++j) {
        if (!x.tangents[j].valid()) continue;
        const Var darg = g.scale(x.tangents[j], f);
        dparts[j].push_back(g.mul(c, darg));
        dparts[j].push_back(g.scale(g.mul(s, darg), -1.0));
      }
    }
    Dual freq{g.concat_cols(parts), {}};
    for (auto& dp : dparts) freq.tangents.push_back(dp.empty() ? Var{} : g.concat_cols(dp));
    blocks.push_back(freq);
  }
  return blocks;
}

Dual run_mlp(Graph& g, const std::vector<LayerSpec>& specs, std::vector<Dual> first, const std::vector<Dual>& skip,
             int skip_layer, double beta, std::size_t tangent_count) {
  Dual h;
  for (std::size_t l = 0; l < specs.size(); ++l) {
    std::vector<Dual> blocks;
    if (l == 0) {
      blocks = std::move(first);
    } else {
      blocks.push_back(h);
      if (static_cast<int>(l) == skip_layer) blocks.insert(blocks.end(), skip.begin(), skip.end());
    }
    Dual pre = dense(g, specs[l], blocks, tangent_count);
    h = (l + 1 == specs.size()) ? pre : softplus(g, pre, beta);
  }
  return h;
}

}  // namespace

// ---------------------------------------------------------------------------

void FieldArchitecture::validate() const {
  if (position.frequencies < 0 || time.frequencies < 0) throw ConfigError("arch: encoding frequencies must be >= 0");
  if (deform_width < 1 || deform_layers < 1 || sdf_width < 1 || sdf_layers < 1 || radiance_width < 1 ||
      radiance_layers < 1 || feature_dim < 0) {
    throw ConfigError("arch: layer sizes must be positive");
  }
  const std::size_t enc = position.output_dim(3);
  if (sdf_skip >= 1 && sdf_skip < sdf_layers && static_cast<std::size_t>(sdf_width) <= enc) {
    throw ConfigError("arch: sdf_width must exceed the encoded input width when a skip layer is used");
  }
  if (!(sdf_beta > 0 && deform_beta > 0 && radiance_beta > 0)) throw ConfigError("arch: softplus beta must be positive");
  if (!(init_radius > 0 && init_radius < 1)) throw ConfigError("arch: init_radius must lie in (0,1)");
  if (!(init_sharpness > 0)) throw ConfigError("arch: init_sharpness must be positive");
  if (!(near >= 0 && near < far)) throw ConfigError("arch: need 0 <= near < far");
  if (samples < 2) throw ConfigError("arch: need at least 2 samples per ray");
  calibration.intrinsics.validate();
}

json FieldArchitecture::to_json() const {
  const auto pose = calibration.reference_pose.to_row_major();
  const auto& in = calibration.intrinsics;
  const auto& n = calibration.normalization;
  return {
      {"format_version", 1},
      {"position_encoding", {{"frequencies", position.frequencies}, {"include_input", position.include_input}}},
      {"time_encoding", {{"frequencies", time.frequencies}, {"include_input", time.include_input}}},
      {"deform", {{"width", deform_width}, {"layers", deform_layers}, {"beta", deform_beta}}},
      {"sdf",
       {{"width", sdf_width},
        {"layers", sdf_layers},
        {"skip", sdf_skip},
        {"feature_dim", feature_dim},
        {"beta", sdf_beta},
        {"init_radius", init_radius}}},
      {"radiance", {{"width", radiance_width}, {"layers", radiance_layers}, {"beta", radiance_beta}}},
      {"init_sharpness", init_sharpness},
      {"track_conditioning", track_conditioning},
      {"render", {{"near", near}, {"far", far}, {"samples", samples}}},
      {"calibration",
       {{"intrinsics",
         {{"fx", in.fx}, {"fy", in.fy}, {"cx", in.cx}, {"cy", in.cy}, {"width", in.width}, {"height", in.height}}},
        {"reference_pose", std::vector<double>(pose.begin(), pose.end())},
        {"normalization", {{"center", {n.center.x(), n.center.y(), n.center.z()}}, {"scale", n.scale}}}}},
  };
}

FieldArchitecture FieldArchitecture::from_json(const json& doc) {
  FieldArchitecture a;
  try {
    if (doc.at("format_version").get<int>() != 1) throw FormatError("arch.json: unsupported format_version");
    a.position.frequencies = doc.at("position_encoding").at("frequencies").get<int>();
    a.position.include_input = doc.at("position_encoding").at("include_input").get<bool>();
    a.time.frequencies = doc.at("time_encoding").at("frequencies").get<int>();
    a.time.include_input = doc.at("time_encoding").at("include_input").get<bool>();
    const auto& d = doc.at("deform");
    a.deform_width = d.at("width").get<int>();
    a.deform_layers = d.at("layers").get<int>();
    a.deform_beta = d.at("beta").get<double>();
    const auto& s = doc.at("sdf");
    a.sdf_width = s.at("width").get<int>();
    a.sdf_layers = s.at("layers").get<int>();
    a.sdf_skip = s.at("skip").get<int>();
    a.feature_dim = s.at("feature_dim").get<int>();
    a.sdf_beta = s.at("beta").get<double>();
    a.init_radius = s.at("init_radius").get<double>();
    const auto& r = doc.at("radiance");
    a.radiance_width = r.at("width").get<int>();
    a.radiance_layers = r.at("layers").get<int>();
    a.radiance_beta = r.at("beta").get<double>();
    a.init_sharpness = doc.at("init_sharpness").get<double>();
    a.track_conditioning = doc.at("track_conditioning").get<bool>();
    a.near = doc.at("render").at("near").get<double>();
    a.far = doc.at("render").at("far").get<double>();
    a.samples = doc.at("render").at("samples").get<int>();
    const auto& c = doc.at("calibration");
    const auto& in = c.at("intrinsics");
    a.calibration.intrinsics.fx = in.at("fx").get<double>();
    a.calibration.intrinsics.fy = in.at("fy").get<double>();
    a.calibration.intrinsics.cx = in.at("cx").get<double>();
    a.calibration.intrinsics.cy = in.at("cy").get<double>();
    a.calibration.intrinsics.width = in.at("width").get<int>();
    a.calibration.intrinsics.height = in.at("height").get<int>();
    const auto pose = c.at("reference_pose").get<std::vector<double>>();
    if (pose.size() != 16) throw FormatError("arch.json: reference_pose needs 16 values");
    a.calibration.reference_pose = Pose::from_row_major(pose);
    const auto center = c.at("normalization").at("center").get<std::vector<double>>();
    if (center.size() != 3) throw FormatError("arch.json: normalization center needs 3 values");
    a.calibration.normalization.center = Vec3(center[0], center[1], center[2]);
    a.calibration.normalization.scale = c.at("normalization").at("scale").get<double>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("arch.json: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("arch.json: ") + e.what());
  }
  try {
    a.validate();
  } catch (const Error& e) {
    throw FormatError(std::string("arch.json: ") + e.what());
  }
  return a;
}

FieldBundle FieldBundle::initialize(const FieldArchitecture& arch, std::uint64_t seed) {
  arch.validate();
  FieldBundle b;
  b.arch = arch;
  std::mt19937_64 rng(seed);
  for (const auto& s : deform_specs(arch)) init_layer(b.params, s, arch, rng);
  for (const auto& s : sdf_specs(arch)) init_layer(b.params, s, arch, rng);
  for (const auto& s : radiance_specs(arch)) init_layer(b.params, s, arch, rng);
  b.params.add(kLogSharpness, Tensor::scalar(std::log(arch.init_sharpness)));
  return b;
}

double FieldBundle::sharpness() const { return std::exp(params.value(kLogSharpness)[0]); }

void save_bundle(const FieldBundle& bundle, const fs::path& dir) {
  fs::create_directories(dir);
  save_checkpoint(bundle.params, dir / "params.json");
  write_file_atomic(dir / "arch.json", bundle.arch.to_json().dump(2) + "\n");
}

FieldBundle load_bundle(const fs::path& dir) {
  json doc;
  try {
    doc = json::parse(read_file(dir / "arch.json"));
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("arch.json: ") + e.what());
  }
  FieldBundle b;
  b.arch = FieldArchitecture::from_json(doc);
  b.params = load_checkpoint(dir / "params.json");
  const FieldBundle reference = FieldBundle::initialize(b.arch, 0);
  if (reference.params.names() != b.params.names()) {
    throw FormatError("checkpoint parameters do not match arch.json");
  }
  for (const auto& name : reference.params.names()) {
    if (reference.params.value(name).shape() != b.params.value(name).shape()) {
      throw FormatError("checkpoint parameter '" + name + "' has shape " + shape_string(b.params.value(name).shape()) +
                        ", arch.json implies " + shape_string(reference.params.value(name).shape()));
    }
  }
  return b;
}

// ---------------------------------------------------------------------------

namespace net {

Var axis(Graph& g, int k) {
  Tensor e({1, 3}, 0.0);
  e[static_cast<std::size_t>(k)] = 1.0;
  return g.constant(std::move(e));
}

Dual encode(Graph& g, const Dual& x, const PositionalEncoding& enc) {
  const auto blocks = encode_blocks(g, x, enc);
  Dual out;
  std::vector<Var> vals;
  for (const auto& b : blocks) vals.push_back(b.value);
  out.value = vals.size() == 1 ? vals[0] : g.concat_cols(vals);
  for (std::size_t j = 0; j < x.tangents.size(); ++j) {
    std::vector<Var> ts;
    for (const auto& b : blocks) ts.push_back(b.tangents[j]);
    out.tangents.push_back(ts.size() == 1 ? ts[0] : g.concat_cols(ts));
  }
  return out;
}

Dual deform(Graph& g, const FieldArchitecture& arch, const Dual& x, Var p_hat, Var t) {
  const auto& in = arch.calibration.intrinsics;
  std::vector<Dual> first = encode_blocks(g, x, arch.position);
  first.push_back({g.scale(p_hat, 1.0 / std::max(in.width, in.height)), {}});
  for (auto& b : encode_blocks(g, Dual{t, {}}, arch.time)) first.push_back(b);
  return run_mlp(g, deform_specs(arch), std::move(first), {}, -1, arch.deform_beta, x.tangents.size());
}

Dual sdf(Graph& g, const FieldArchitecture& arch, const Dual& x) {
  auto enc = encode_blocks(g, x, arch.position);
  return run_mlp(g, sdf_specs(arch), enc, enc, arch.sdf_skip, arch.sdf_beta, x.tangents.size());
}

Var radiance(Graph& g, const FieldArchitecture& arch, Var x_c, Var v_c, Var normal, Var feature) {
  std::vector<Dual> first = {{x_c, {}}, {v_c, {}}, {normal, {}}, {feature, {}}};
  const Dual out = run_mlp(g, radiance_specs(arch), std::move(first), {}, -1, arch.radiance_beta, 0);
  return g.sigmoid(out.value);
}

}  // namespace net

// ---------------------------------------------------------------------------

namespace {

Tensor row(const Vec3& v) { return Tensor({1, 3}, {v.x(), v.y(), v.z()}); }

Tensor rows(std::span<const Vec3> pts) {
  Tensor t({pts.size(), 3});
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (int k = 0; k < 3; ++k) t(i, k) = pts[i][k];
  return t;
}

constexpr std::size_t kChunk = 4096;

}  // namespace

void DeformationQuery::validate() const {
  if (!x_o.allFinite() || !p_hat.allFinite() || !std::isfinite(t)) throw ValueError("deformation query must be finite");
  if (t < 0.0 || t > 1.0) throw ValueError("deformation query time must lie in [0,1]");
}

Vec3 deform(const FieldBundle& bundle, const DeformationQuery& q) {
  q.validate();
  Graph g(&bundle.params);
  const Var x = g.constant(row(q.x_o));
  const Var p = g.constant(Tensor({1, 2}, {q.p_hat.x(), q.p_hat.y()}));
  const Var t = g.constant(Tensor::scalar(q.t));
  const Dual out = net::deform(g, bundle.arch, Dual{x, {}}, p, t);
  g.forward({});
  const Tensor& v = g.value(out.value);
  return {v[0], v[1], v[2]};
}

Mat3 deform_jacobian(const FieldBundle& bundle, const DeformationQuery& q) {
  q.validate();
  const Tensor J = jacobian(
      [&](Graph& g, Var x) {
        const Var p = g.constant(Tensor({1, 2}, {q.p_hat.x(), q.p_hat.y()}));
        const Var t = g.constant(Tensor::scalar(q.t));
        return net::deform(g, bundle.arch, Dual{x, {}}, p, t).value;
      },
      row(q.x_o), &bundle.params);
  Mat3 m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m(r, c) = J(r, c);
  return m;
}

Vec3 canonical_view(const Vec3& v_o, const Mat3& J) {
  if (std::abs(v_o.norm() - 1.0) > 1e-9) throw ValueError("canonical_view: v_o must be a unit vector");
  const Vec3 v = v_o + J * v_o;
  const double n = v.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw NumericError("canonical_view: degenerate Jacobian, (I + J) v_o = 0");
  return v / n;
}

SdfSample sdf(const FieldBundle& bundle, const Vec3& x_c) {
  Graph g(&bundle.params);
  const Dual out = net::sdf(g, bundle.arch, Dual{g.constant(row(x_c)), {}});
  g.forward({});
  const Tensor& v = g.value(out.value);
  SdfSample s;
  s.distance = v[0];
  s.feature.assign(v.values().begin() + 1, v.values().end());
  return s;
}

Vec3 sdf_gradient(const FieldBundle& bundle, const Vec3& x_c) { return sdf_gradient_batch(bundle, {&x_c, 1})[0]; }

Vec3 radiance(const FieldBundle& bundle, const Vec3& x_c, const Vec3& v_c, const Vec3& normal,
              std::span<const double> feature) {
  if (feature.size() != static_cast<std::size_t>(bundle.arch.feature_dim)) {
    throw ShapeError("radiance: feature has " + std::to_string(feature.size()) + " entries, expected " +
                     std::to_string(bundle.arch.feature_dim));
  }
  Graph g(&bundle.params);
  const Var f = g.constant(Tensor({1, feature.size()}, std::vector<double>(feature.begin(), feature.end())));
  const Var rgb =
      net::radiance(g, bundle.arch, g.constant(row(x_c)), g.constant(row(v_c)), g.constant(row(normal)), f);
  g.forward({});
  const Tensor& v = g.value(rgb);
  return {v[0], v[1], v[2]};
}

std::vector<double> sdf_batch(const FieldBundle& bundle, std::span<const Vec3> points) {
  std::vector<double> out;
  out.reserve(points.size());
  for (std::size_t b = 0; b < points.size(); b += kChunk) {
    const auto chunk = points.subspan(b, std::min(kChunk, points.size() - b));
    Graph g(&bundle.params);
    const Dual s = net::sdf(g, bundle.arch, Dual{g.constant(rows(chunk)), {}});
    const Var d = g.slice_cols(s.value, 0, 1);
    g.forward({});
    const auto& v = g.value(d).values();
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

std::vector<Vec3> sdf_gradient_batch(const FieldBundle& bundle, std::span<const Vec3> points) {
  std::vector<Vec3> out;
  out.reserve(points.size());
  for (std::size_t b = 0; b < points.size(); b += kChunk) {
    const auto chunk = points.subspan(b, std::min(kChunk, points.size() - b));
    Graph g(&bundle.params);
    const Var x = g.input("x", true);
    const Dual s = net::sdf(g, bundle.arch, Dual{x, {}});
    // Rows are independent, so the gradient of the column sum is the per-row gradient.
    const Var total = g.sum(g.slice_cols(s.value, 0, 1));
    g.forward({{"x", rows(chunk)}});
    g.backward(total, Tensor::scalar(1.0));
    const Tensor& gx = g.grad(x);
    for (std::size_t i = 0; i < chunk.size(); ++i) out.emplace_back(gx(i, 0), gx(i, 1), gx(i, 2));
  }
  return out;
}

std::vector<Vec3> deform_batch(const FieldBundle& bundle, std::span<const Vec3> points, std::span<const Vec2> p_hat,
                               double t) {
  if (p_hat.size() != points.size()) throw ShapeError("deform_batch: need one p_hat per point");
  std::vector<Vec3> out;
  out.reserve(points.size());
  for (std::size_t b = 0; b < points.size(); b += kChunk) {
    const std::size_t n = std::min(kChunk, points.size() - b);
    Tensor p({n, 2});
    for (std::size_t i = 0; i < n; ++i) {
      p(i, 0) = p_hat[b + i].x();
      p(i, 1) = p_hat[b + i].y();
    }
    Graph g(&bundle.params);
    const Dual d = net::deform(g, bundle.arch, Dual{g.constant(rows(points.subspan(b, n))), {}},
                               g.constant(std::move(p)), g.constant(Tensor({n, 1}, t)));
    g.forward({});
    const Tensor& v = g.value(d.value);
    for (std::size_t i = 0; i < n; ++i) out.emplace_back(v(i, 0), v(i, 1), v(i, 2));
  }
  return out;
}

}  // namespace tissuedef
