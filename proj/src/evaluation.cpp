// Copyright (c) the DKIC Project
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "dkic/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "json.hpp"

#include "dkic/error.hpp"

namespace dkic {

using nlohmann::json;

double psnr(const ImageU8& a, const ImageU8& b) {
  if (a.width != b.width || a.height != b.height)
    throw data_error("psnr: image dims differ");
  if (a.rgb.size() != b.rgb.size() || a.rgb.empty())
    throw data_error("psnr: malformed images");
  double mse = 0;
  for (size_t i = 0; i < a.rgb.size(); ++i) {
    const double d = static_cast<double>(a.rgb[i]) - b.rgb[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.rgb.size());
  if (mse <= 0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(255.0 * 255.0 / mse));
}

double bpp(const Bitstream& b, int width, int height) {
  if (b.header.width != width || b.header.height != height)
    throw data_error("bpp: dims do not match stream header");
  return 8.0 * static_cast<double>(pack_bitstream(b).size()) /
         (static_cast<double>(width) * height);
}

void validate_curve(const RdCurve& c) {
  if (c.size() < 2) throw data_error("rd curve: need at least 2 points");
  for (size_t i = 1; i < c.size(); ++i)
    if (!(c[i].bpp > c[i - 1].bpp))
      throw data_error("rd curve: bpp must be strictly increasing");
}

namespace {

// Monotone piecewise-cubic (PCHIP) interpolant of y over x with analytic
// segment integrals.
struct Pchip {
  std::vector<double> x, y, d;

  static double pchip_end(double h0, double h1, double d0, double d1) {
    double t = ((2 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if (t * d0 <= 0) return 0.0;
    if (d0 * d1 <= 0 && std::fabs(t) > 3 * std::fabs(d0)) return 3 * d0;
    return t;
  }

  explicit Pchip(std::vector<double> xs, std::vector<double> ys)
      : x(std::move(xs)), y(std::move(ys)) {
    const size_t n = x.size();
    std::vector<double> h(n - 1), s(n - 1);
    for (size_t i = 0; i + 1 < n; ++i) {
      h[i] = x[i + 1] - x[i];
      if (!(h[i] > 0)) throw data_error("bd_rate: psnr not increasing");
      s[i] = (y[i + 1] - y[i]) / h[i];
    }
    d.resize(n);
    for (size_t i = 1; i + 1 < n; ++i) {
      if (s[i - 1] * s[i] <= 0) {
        d[i] = 0;
      } else {
        const double w1 = 2 * h[i] + h[i - 1];
        const double w2 = h[i] + 2 * h[i - 1];
        d[i] = (w1 + w2) / (w1 / s[i - 1] + w2 / s[i]);
      }
    }
    d[0] = pchip_end(h[0], h[1], s[0], s[1]);
    d[n - 1] = pchip_end(h[n - 2], h[n - 3], s[n - 2], s[n - 3]);
  }

  // Integral of the interpolant over [a, b] within the knot range.
  double integral(double a, double b) const {
    double acc = 0;
    for (size_t i = 0; i + 1 < x.size(); ++i) {
      const double lo = std::max(a, x[i]);
      const double hi = std::min(b, x[i + 1]);
      if (hi <= lo) continue;
      const double h = x[i + 1] - x[i];
      const double dy = y[i + 1] - y[i];
      // p(s) = y_i + c1 s + c2 s^2 + c3 s^3 on s in [0,1]
      const double c1 = h * d[i];
      const double c2 = 3 * dy - 2 * h * d[i] - h * d[i + 1];
      const double c3 = -2 * dy + h * d[i] + h * d[i + 1];
      auto anti = [&](double s) {
        return y[i] * s + c1 * s * s / 2 + c2 * s * s * s / 3 +
               c3 * s * s * s * s / 4;
      };
      const double s0 = (lo - x[i]) / h;
      const double s1 = (hi - x[i]) / h;
      acc += h * (anti(s1) - anti(s0));
    }
    return acc;
  }
};

}  // namespace

double bd_rate(const RdCurve& test, const RdCurve& anchor) {
  validate_curve(test);
  validate_curve(anchor);
  if (test.size() < 4 || anchor.size() < 4)
    throw data_error("bd_rate: need at least 4 points per curve");
  auto split = [](const RdCurve& c) {
    std::vector<double> xs, ys;
    for (const auto& p : c) {
      xs.push_back(p.psnr);
      ys.push_back(std::log10(p.bpp));
    }
    return std::make_pair(xs, ys);
  };
  auto [xt, yt] = split(test);
  auto [xa, ya] = split(anchor);
  const double lo = std::max(xt.front(), xa.front());
  const double hi = std::min(xt.back(), xa.back());
  if (!(hi > lo)) throw data_error("bd_rate: curves do not overlap in PSNR");
  Pchip pt(xt, yt), pa(xa, ya);
  const double avg_diff =
      (pt.integral(lo, hi) - pa.integral(lo, hi)) / (hi - lo);
  return (std::pow(10.0, avg_diff) - 1.0) * 100.0;
}

void write_rd_csv(const std::string& path, const RdCurve& curve, bool append) {
  const bool exists = std::filesystem::exists(path);
  FILE* f = std::fopen(path.c_str(), append ? "a" : "w");
  if (!f) throw data_error("cannot open csv: " + path);
  if (!append || !exists) std::fprintf(f, "bpp,psnr\n");
  for (const auto& p : curve) std::fprintf(f, "%.8f,%.8f\n", p.bpp, p.psnr);
  std::fclose(f);
}

RdCurve read_rd_csv(const std::string& path) {
  FILE* f = std::fopen(path.c_str(), "r");
  if (!f) throw data_error("cannot open csv: " + path);
  RdCurve curve;
  char line[256];
  bool first = true;
  while (std::fgets(line, sizeof line, f)) {
    std::string s(line);
    if (first && s.rfind("bpp", 0) == 0) {
      first = false;
      continue;
    }
    first = false;
    RdPoint p;
    if (std::sscanf(s.c_str(), "%lf,%lf", &p.bpp, &p.psnr) == 2)
      curve.push_back(p);
  }
  std::fclose(f);
  if (curve.empty()) throw data_error("empty rd csv: " + path);
  return curve;
}

// ---------------------------------------------------------------------------
// offset visualization
// ---------------------------------------------------------------------------

std::string OffsetRecord::to_json() const {
  json j;
  j["feature_height"] = feature_height;
  j["feature_width"] = feature_width;
  j["scale"] = scale;
  j["target"] = {target_y, target_x};
  json pts = json::array();
  for (const auto& p : points) {
    json q;
    q["group"] = p.group;
    q["point"] = p.point;
    q["dy"] = p.dy;
    q["dx"] = p.dx;
    q["y"] = p.y;
    q["x"] = p.x;
    pts.push_back(q);
  }
  j["points"] = pts;
  return j.dump(2);
}

OffsetRecord OffsetRecord::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw data_error(std::string("offset record parse error: ") + e.what());
  }
  OffsetRecord r;
  try {
    r.feature_height = j.at("feature_height").get<int>();
    r.feature_width = j.at("feature_width").get<int>();
    r.scale = j.at("scale").get<int>();
    r.target_y = j.at("target")[0].get<int>();
    r.target_x = j.at("target")[1].get<int>();
    for (const auto& q : j.at("points")) {
      Point p;
      p.group = q.at("group").get<int>();
      p.point = q.at("point").get<int>();
      p.dy = q.at("dy").get<double>();
      p.dx = q.at("dx").get<double>();
      p.y = q.at("y").get<double>();
      p.x = q.at("x").get<double>();
      r.points.push_back(p);
    }
  } catch (const json::exception& e) {
    throw data_error(std::string("offset record field error: ") + e.what());
  }
  return r;
}

OffsetRecord visualize_offsets(const CodecModel& model, const ImageU8& image,
                               int target_y, int target_x) {
  NoGradGuard ng;
  const auto& drb = model.analysis().probe_block();
  Var feat = model.analysis().probe_input(constant(to_tensor(image)));
  const int fh = feat->value.dim(2), fw = feat->value.dim(3);
  if (target_y < 0 || target_y >= fh || target_x < 0 || target_x >= fw)
    throw data_error("offset visualization: target outside feature grid");
  auto [off, mod] = generate_offsets_modulations(feat, drb.ldcn.gen,
                                                 drb.ldcn.cfg);
  (void)mod;
  OffsetRecord rec;
  rec.feature_height = fh;
  rec.feature_width = fw;
  rec.scale = 2;
  rec.target_y = target_y;
  rec.target_x = target_x;
  const int G = drb.ldcn.cfg.groups, K = drb.ldcn.cfg.points();
  const int ks = drb.ldcn.cfg.kernel_side, half = (ks - 1) / 2;
  for (int g = 0; g < G; ++g)
    for (int k = 0; k < K; ++k) {
      OffsetRecord::Point p;
      p.group = g;
      p.point = k;
      p.dy = off->value.at4(0, (g * K + k) * 2, target_y, target_x);
      p.dx = off->value.at4(0, (g * K + k) * 2 + 1, target_y, target_x);
      p.y = target_y + (k / ks - half) + p.dy;
      p.x = target_x + (k % ks - half) + p.dx;
      rec.points.push_back(p);
    }
  return rec;
}

ImageU8 annotate_offsets(const ImageU8& image, const OffsetRecord& rec) {
  static constexpr uint8_t kPalette[8][3] = {
      {230, 60, 60},  {60, 200, 60},  {70, 110, 245}, {240, 200, 40},
      {220, 90, 220}, {70, 210, 210}, {245, 140, 40}, {160, 160, 160}};
  ImageU8 out = image;
  auto put = [&](int y, int x, const uint8_t* rgbv) {
    if (y < 0 || y >= out.height || x < 0 || x >= out.width) return;
    for (int c = 0; c < 3; ++c) out.at(y, x, c) = rgbv[c];
  };
  auto box = [&](double fy, double fx, const uint8_t* rgbv, int r) {
    const int py = static_cast<int>(std::lround(fy * rec.scale));
    const int px = static_cast<int>(std::lround(fx * rec.scale));
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx) put(py + dy, px + dx, rgbv);
  };
  for (const auto& p : rec.points)
    box(p.y, p.x, kPalette[p.group % 8], 1);
  static constexpr uint8_t kWhite[3] = {255, 255, 255};
  box(rec.target_y, rec.target_x, kWhite, 2);
  return out;
}

// ---------------------------------------------------------------------------
// latent statistics
// ---------------------------------------------------------------------------

std::string LatentStatsReport::to_json() const {
  json j;
  j["untrained"] = untrained;
  json gs = json::array();
  for (const auto& g : groups) {
    json q;
    q["group"] = g.group;
    q["mean_abs"] = g.mean_abs;
    q["lag1_correlation"] = g.lag1_correlation;
    gs.push_back(q);
  }
  j["groups"] = gs;
  return j.dump(2);
}

namespace {

// Mean of horizontal and vertical lag-1 autocorrelation of one plane;
// zero by convention when the variance degenerates.
double lag1_of_plane(const Tensor& y, int n, int c) {
  const int H = y.dim(2), W = y.dim(3);
  double mean = 0;
  for (int h = 0; h < H; ++h)
    for (int w = 0; w < W; ++w) mean += y.at4(n, c, h, w);
  mean /= static_cast<double>(H) * W;
  double var = 0;
  for (int h = 0; h < H; ++h)
    for (int w = 0; w < W; ++w) {
      const double d = y.at4(n, c, h, w) - mean;
      var += d * d;
    }
  var /= static_cast<double>(H) * W;
  if (var < 1e-12) return 0.0;
  double cov = 0;
  int64_t pairs = 0;
  for (int h = 0; h < H; ++h)
    for (int w = 0; w + 1 < W; ++w) {
      cov += (y.at4(n, c, h, w) - mean) * (y.at4(n, c, h, w + 1) - mean);
      ++pairs;
    }
  for (int h = 0; h + 1 < H; ++h)
    for (int w = 0; w < W; ++w) {
      cov += (y.at4(n, c, h, w) - mean) * (y.at4(n, c, h + 1, w) - mean);
      ++pairs;
    }
  if (pairs == 0) return 0.0;
  return (cov / static_cast<double>(pairs)) / var;
}

}  // namespace

LatentStatsReport latent_group_stats(const CodecModel& model,
                                     const std::vector<ImageU8>& images) {
  if (images.empty()) throw data_error("latent stats: no images");
  const auto& schedule = model.schedule();
  const auto offsets = schedule.group_offsets();
  LatentStatsReport rep;
  rep.untrained = model.train_step() == 0;
  rep.groups.resize(static_cast<size_t>(schedule.num_groups()));
  std::vector<double> abs_sum(static_cast<size_t>(schedule.num_groups()), 0);
  std::vector<int64_t> abs_cnt(static_cast<size_t>(schedule.num_groups()), 0);
  std::vector<double> rho_sum(static_cast<size_t>(schedule.num_groups()), 0);
  std::vector<int64_t> rho_cnt(static_cast<size_t>(schedule.num_groups()), 0);
  for (const auto& img : images) {
    const CompressResult cr = compress(to_tensor(img), model);
    const Tensor& y = cr.y_hat;
    for (int g = 0; g < schedule.num_groups(); ++g)
      for (int c = 0; c < schedule.group_sizes[static_cast<size_t>(g)]; ++c) {
        const int ch = offsets[static_cast<size_t>(g)] + c;
        for (int h = 0; h < y.dim(2); ++h)
          for (int w = 0; w < y.dim(3); ++w) {
            abs_sum[static_cast<size_t>(g)] += std::fabs(y.at4(0, ch, h, w));
            ++abs_cnt[static_cast<size_t>(g)];
          }
        rho_sum[static_cast<size_t>(g)] += lag1_of_plane(y, 0, ch);
        ++rho_cnt[static_cast<size_t>(g)];
      }
  }
  for (int g = 0; g < schedule.num_groups(); ++g) {
    auto& gs = rep.groups[static_cast<size_t>(g)];
    gs.group = g + 1;
    gs.mean_abs = abs_sum[static_cast<size_t>(g)] /
                  static_cast<double>(abs_cnt[static_cast<size_t>(g)]);
    gs.lag1_correlation = rho_sum[static_cast<size_t>(g)] /
                          static_cast<double>(rho_cnt[static_cast<size_t>(g)]);
  }
  return rep;
}

}  // namespace dkic
