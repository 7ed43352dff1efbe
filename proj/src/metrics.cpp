// Copyright (c) 2026, The usrnet-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "usrnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace usrnet::metrics {

double psnr(const Image& a, const Image& b, double peak) {
  require_same_shape(a.shape(), b.shape(), "psnr");
  if (!(peak > 0)) throw std::invalid_argument("psnr: peak must be positive");
  if (a.size() == 0) throw std::invalid_argument("psnr: empty image");
  double se = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.size());
  if (mse == 0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

std::vector<double> gaussian_taps(int size, double sigma) {
  if (size < 1 || size % 2 == 0) throw std::invalid_argument("gaussian window size must be odd and positive");
  std::vector<double> g(static_cast<std::size_t>(size));
  const double mid = (size - 1) / 2.0;
  double total = 0;
  for (int i = 0; i < size; ++i) {
    const double d = i - mid;
    g[static_cast<std::size_t>(i)] = std::exp(-d * d / (2 * sigma * sigma));
    total += g[static_cast<std::size_t>(i)];
  }
  for (double& v : g) v /= total;
  return g;
}

Image luma(const Image& img) {
  if (img.channels() == 1) return img;
  if (img.channels() != 3) throw std::invalid_argument("luma: expected 1 or 3 channels");
  Image y(1, img.height(), img.width());
  const std::size_t plane = img.shape().plane();
  for (std::size_t i = 0; i < plane; ++i)
    y[i] = 0.299 * img.channel(0)[i] + 0.587 * img.channel(1)[i] + 0.114 * img.channel(2)[i];
  return y;
}

namespace {

/// Separable "valid" filtering of a single-channel map.
std::vector<double> filter_valid(const std::vector<double>& src, int h, int w, const std::vector<double>& g) {
  const int k = static_cast<int>(g.size());
  const int oh = h - k + 1, ow = w - k + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0;
      for (int i = 0; i < k; ++i) s += g[static_cast<std::size_t>(i)] * src[static_cast<std::size_t>(y) * w + x + i];
      rows[static_cast<std::size_t>(y) * ow + x] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0;
      for (int i = 0; i < k; ++i) s += g[static_cast<std::size_t>(i)] * rows[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  return out;
}

}  // namespace

double ssim(const Image& a, const Image& b, const SsimOptions& opt) {
  require_same_shape(a.shape(), b.shape(), "ssim");
  if (a.height() < opt.window || a.width() < opt.window) {
    throw std::invalid_argument("ssim: image " + to_string(a.shape()) + " is smaller than the " + std::to_string(opt.window) +
                                "x" + std::to_string(opt.window) + " window");
  }
  const Image ya = luma(a), yb = luma(b);
  const int h = ya.height(), w = ya.width();
  const std::size_t n = ya.size();
  std::vector<double> x(ya.data(), ya.data() + n), y(yb.data(), yb.data() + n), xx(n), yy(n), xy(n);
  for (std::size_t i = 0; i < n; ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto g = gaussian_taps(opt.window, opt.sigma);
  const auto mx = filter_valid(x, h, w, g), my = filter_valid(y, h, w, g);
  const auto sxx = filter_valid(xx, h, w, g), syy = filter_valid(yy, h, w, g), sxy = filter_valid(xy, h, w, g);
  const double c1 = (opt.k1 * opt.peak) * (opt.k1 * opt.peak);
  const double c2 = (opt.k2 * opt.peak) * (opt.k2 * opt.peak);
  double total = 0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double va = sxx[i] - mx[i] * mx[i];
    const double vb = syy[i] - my[i] * my[i];
    const double cov = sxy[i] - mx[i] * my[i];
    total += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) / ((mx[i] * mx[i] + my[i] * my[i] + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(mx.size());
}

Summary summarize(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("summarize: no values");
  Summary s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  double var = 0;
  for (double v : values) var += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(var / static_cast<double>(values.size()));
  return s;
}

namespace {

void finish(MetricReport& r) {
  std::vector<double> p, s;
  for (const auto& row : r.images) {
    p.push_back(row.psnr);
    s.push_back(row.ssim);
  }
  r.psnr = summarize(p);
  r.ssim = summarize(s);
}

}  // namespace

MetricReport evaluate_set(const std::vector<ImagePair>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("evaluate_set: no image pairs");
  MetricReport r;
  for (const auto& pr : pairs) r.images.push_back({pr.name, psnr(pr.test, pr.reference), ssim(pr.test, pr.reference)});
  finish(r);
  return r;
}

nlohmann::json to_json(const MetricReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.images) rows.push_back({{"name", row.name}, {"psnr", row.psnr}, {"ssim", row.ssim}});
  return {{"images", rows},
          {"aggregate",
           {{"psnr", {{"mean", r.psnr.mean}, {"std", r.psnr.std}}}, {"ssim", {{"mean", r.ssim.mean}, {"std", r.ssim.std}}}}},
          {"count", r.images.size()}};
}

MetricReport report_from_json(const nlohmann::json& j) {
  MetricReport r;
  for (const auto& row : j.at("images"))
    r.images.push_back({row.at("name").get<std::string>(), row.at("psnr").get<double>(), row.at("ssim").get<double>()});
  const auto& agg = j.at("aggregate");
  r.psnr = {agg.at("psnr").at("mean").get<double>(), agg.at("psnr").at("std").get<double>()};
  r.ssim = {agg.at("ssim").at("mean").get<double>(), agg.at("ssim").at("std").get<double>()};
  return r;
}

std::string render_table(const MetricReport& r) {
  std::size_t name_w = 9;
  for (const auto& row : r.images) name_w = std::max(name_w, row.name.size());
  char buf[512];
  std::string out;
  std::snprintf(buf, sizeof buf, "%-*s  %18s  %18s\n", static_cast<int>(name_w), "image", "PSNR (dB)", "SSIM");
  out += buf;
  for (const auto& row : r.images) {
    std::snprintf(buf, sizeof buf, "%-*s  %18.3f  %18.4f\n", static_cast<int>(name_w), row.name.c_str(), row.psnr, row.ssim);
    out += buf;
  }
  char p[64], s[64];
  std::snprintf(p, sizeof p, "%.3f±%.3f", r.psnr.mean, r.psnr.std);
  std::snprintf(s, sizeof s, "%.4f±%.4f", r.ssim.mean, r.ssim.std);
  // "±" is two bytes in UTF-8, so pad the aggregate cells one wider.
  std::snprintf(buf, sizeof buf, "%-*s  %19s  %19s\n", static_cast<int>(name_w) + 1, "mean±std", p, s);
  out += buf;
  return out;
}

}  // namespace usrnet::metrics
