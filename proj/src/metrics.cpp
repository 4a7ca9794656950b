#include "tissuedef/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include "tissuedef/error.hpp"

using nlohmann::json;

namespace tissuedef {

namespace {

double db(double mse, double max_value) {
  if (mse == 0.0) return kPsnrSaturation;
  return 10.0 * std::log10(max_value * max_value / mse);
}

void check_same(const Image& a, const Image& b, const char* what) {
  if (!a.same_size(b) || a.channels != b.channels) {
    throw ShapeError(std::string(what) + ": images differ in shape (" + std::to_string(a.height) + "x" +
                     std::to_string(a.width) + "x" + std::to_string(a.channels) + " vs " + std::to_string(b.height) +
                     "x" + std::to_string(b.width) + "x" + std::to_string(b.channels) + ")");
  }
}

std::vector<double> grey(const Image& im) {
  std::vector<double> g(static_cast<std::size_t>(im.height) * im.width);
  for (int r = 0; r < im.height; ++r) {
    for (int c = 0; c < im.width; ++c) {
      double s = 0.0;
      for (int k = 0; k < im.channels; ++k) s += im.at(r, c, k);
      g[static_cast<std::size_t>(r) * im.width + c] = s / im.channels;
    }
  }
  return g;
}

}  // namespace

double psnr(const Image& a, const Image& b, double max_value) {
  check_same(a, b, "psnr");
  if (!(max_value > 0.0)) throw ValueError("psnr: max_value must be positive");
  if (a.data.empty()) throw ValueError("psnr: empty images");
  double se = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    se += d * d;
  }
  return db(se / a.data.size(), max_value);
}

double psnr_masked(const Image& a, const Image& b, const Mask& mask, double max_value) {
  check_same(a, b, "psnr");
  if (mask.height != a.height || mask.width != a.width) throw ShapeError("psnr: mask size differs from the images");
  if (!(max_value > 0.0)) throw ValueError("psnr: max_value must be positive");
  double se = 0.0;
  std::size_t n = 0;
  for (int r = 0; r < a.height; ++r) {
    for (int c = 0; c < a.width; ++c) {
      if (!mask.at(r, c)) continue;
      for (int k = 0; k < a.channels; ++k) {
        const double d = a.at(r, c, k) - b.at(r, c, k);
        se += d * d;
        ++n;
      }
    }
  }
  if (n == 0) throw ValueError("psnr: empty mask");
  return db(se / n, max_value);
}

double ssim(const Image& a, const Image& b, double max_value, const SsimOptions& opt) {
  check_same(a, b, "ssim");
  const int w = opt.window;
  if (w < 1 || a.height < w || a.width < w) {
    throw ValueError("ssim: images must be at least " + std::to_string(w) + "x" + std::to_string(w));
  }
  std::vector<double> kern(w);
  double ks = 0.0;
  for (int i = 0; i < w; ++i) {
    const double x = i - (w - 1) / 2.0;
    kern[i] = std::exp(-x * x / (2.0 * opt.sigma * opt.sigma));
    ks += kern[i];
  }
  for (double& k : kern) k /= ks;
  const std::vector<double> ga = grey(a), gb = grey(b);
  const int H = a.height, W = a.width;
  const double c1 = (opt.k1 * max_value) * (opt.k1 * max_value);
  const double c2 = (opt.k2 * max_value) * (opt.k2 * max_value);
  double total = 0.0;
  std::size_t count = 0;
  for (int r = 0; r + w <= H; ++r) {
    for (int c = 0; c + w <= W; ++c) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int i = 0; i < w; ++i) {
        for (int j = 0; j < w; ++j) {
          const double k = kern[i] * kern[j];
          const std::size_t idx = static_cast<std::size_t>(r + i) * W + (c + j);
          const double x = ga[idx], y = gb[idx];
          ma += k * x;
          mb += k * y;
          saa += k * x * x;
          sbb += k * y * y;
          sab += k * x * y;
        }
      }
      const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  }
  return total / count;
}

DeformationErrors deformation_errors(const Image& pred, const Image& gt, const Mask& mask) {
  if (!pred.same_size(gt) || pred.channels != 3 || gt.channels != 3 || mask.height != pred.height ||
      mask.width != pred.width) {
    throw ShapeError("deformation_errors: fields must be H x W x 3 with a matching mask");
  }
  DeformationErrors e;
  double sum = 0.0;
  for (int r = 0; r < pred.height; ++r) {
    for (int c = 0; c < pred.width; ++c) {
      if (!mask.at(r, c)) continue;
      double s = 0.0;
      for (int k = 0; k < 3; ++k) {
        const double d = pred.at(r, c, k) - gt.at(r, c, k);
        s += d * d;
      }
      sum += s;
      e.maxse = std::max(e.maxse, s);
      ++e.count;
    }
  }
  if (e.count == 0) throw ValueError("deformation_errors: empty mask");
  e.mse = sum / e.count;
  return e;
}

std::vector<FlaggedField> gt_deformation_from_depth(const std::vector<FrameSample>& frames, const Intrinsics& intr,
                                                    int reference) {
  if (reference < 0 || reference >= static_cast<int>(frames.size())) throw ValueError("reference frame out of range");
  const FrameSample& ref = frames[reference];
  const int H = ref.height(), W = ref.width();
  std::vector<FlaggedField> out;
  for (const auto& f : frames) {
    if (f.height() != H || f.width() != W) throw ShapeError("gt_deformation_from_depth: frame sizes differ");
    FlaggedField ff{Image(H, W, 3, std::numeric_limits<double>::quiet_NaN()), Mask(H, W, false)};
    for (int r = 0; r < H; ++r) {
      for (int c = 0; c < W; ++c) {
        const double d0 = ref.depth.at(r, c), dt = f.depth.at(r, c);
        if (!ref.mask.at(r, c) || !f.mask.at(r, c) || !(d0 > 0) || !(dt > 0)) continue;
        const Vec3 p0 = ref.pose.apply(backproject(c, r, d0, intr));
        const Vec3 pt = f.pose.apply(backproject(c, r, dt, intr));
        for (int k = 0; k < 3; ++k) ff.field.at(r, c, k) = pt[k] - p0[k];
        ff.valid.set(r, c, true);
      }
    }
    out.push_back(std::move(ff));
  }
  return out;
}

void summarize(MetricReport& rep) {
  rep.psnr = rep.ssim = rep.deformation_mse = rep.deformation_maxse = 0.0;
  if (rep.per_frame.empty()) return;
  double se = 0.0;
  std::size_t px = 0;
  for (const auto& f : rep.per_frame) {
    rep.psnr += f.psnr;
    rep.ssim += f.ssim;
    se += f.mse * f.pixels;
    px += f.pixels;
    rep.deformation_maxse = std::max(rep.deformation_maxse, f.maxse);
  }
  rep.psnr /= rep.per_frame.size();
  rep.ssim /= rep.per_frame.size();
  rep.deformation_mse = px ? se / px : 0.0;
}

json MetricReport::to_json() const {
  json frames = json::array();
  for (const auto& f : per_frame) {
    frames.push_back({{"frame", f.frame},
                      {"time", f.time},
                      {"psnr", f.psnr},
                      {"ssim", f.ssim},
                      {"deformation_mse", f.mse},
                      {"deformation_maxse", f.maxse},
                      {"pixels", f.pixels}});
  }
  return {{"format_version", 1},
          {"label", label},
          {"split", split},
          {"units", "unit-sphere"},
          {"psnr", psnr},
          {"ssim", ssim},
          {"deformation_mse", deformation_mse},
          {"deformation_maxse", deformation_maxse},
          {"per_frame", frames}};
}

MetricReport MetricReport::from_json(const json& doc) {
  MetricReport r;
  try {
    if (doc.at("format_version").get<int>() != 1) throw FormatError("metric report: unsupported format_version");
    r.label = doc.at("label").get<std::string>();
    r.split = doc.at("split").get<std::string>();
    r.psnr = doc.at("psnr").get<double>();
    r.ssim = doc.at("ssim").get<double>();
    r.deformation_mse = doc.at("deformation_mse").get<double>();
    r.deformation_maxse = doc.at("deformation_maxse").get<double>();
    for (const auto& f : doc.at("per_frame")) {
      r.per_frame.push_back({f.at("frame").get<int>(), f.at("time").get<double>(), f.at("psnr").get<double>(),
                             f.at("ssim").get<double>(), f.at("deformation_mse").get<double>(),
                             f.at("deformation_maxse").get<double>(), f.at("pixels").get<std::size_t>()});
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("metric report: ") + e.what());
  }
  if (!std::isfinite(r.psnr) || r.ssim > 1.0 + 1e-12) throw FormatError("metric report: psnr/ssim out of range");
  return r;
}

std::string MetricReport::table() const {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-12s %8s %8s %8s %12s %12s\n", "Frame", "Time", "PSNR", "SSIM", "MSE", "MaxSE");
  out += buf;
  for (const auto& f : per_frame) {
    std::snprintf(buf, sizeof buf, "%-12d %8.4f %8.3f %8.4f %12.4e %12.4e\n", f.frame, f.time, f.psnr, f.ssim, f.mse,
                  f.maxse);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "%-12s %8s %8.3f %8.4f %12.4e %12.4e\n", label.empty() ? "mean" : label.c_str(), "",
                psnr, ssim, deformation_mse, deformation_maxse);
  out += buf;
  return out;
}

}  // namespace tissuedef
