#include "sfr/metrics.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <random>

namespace sfr {

double ate_rmse_cm(const Trajectory& estimated, const Trajectory& ground_truth,
                   double assoc_tol) {
  // Greedy nearest-timestamp association.
  std::vector<std::pair<int, int>> pairs;
  size_t j = 0;
  for (size_t i = 0; i < estimated.size(); ++i) {
    while (j + 1 < ground_truth.size() &&
           std::abs(ground_truth[j + 1].timestamp - estimated[i].timestamp) <=
               std::abs(ground_truth[j].timestamp - estimated[i].timestamp))
      ++j;
    if (j < ground_truth.size() &&
        std::abs(ground_truth[j].timestamp - estimated[i].timestamp) <= assoc_tol)
      pairs.push_back({int(i), int(j)});
  }
  if (pairs.size() < 2)
    throw DegenerateInput("ate_rmse: fewer than 2 associated pose pairs");

  Eigen::Matrix3Xd src(3, pairs.size()), dst(3, pairs.size());
  for (size_t i = 0; i < pairs.size(); ++i) {
    src.col(i) = estimated[pairs[i].first].pose.t;
    dst.col(i) = ground_truth[pairs[i].second].pose.t;
  }
  const Mat4 T = Eigen::umeyama(src, dst, /*with_scaling=*/false);
  const Mat3 R = T.topLeftCorner<3, 3>();
  const Vec3 t = T.topRightCorner<3, 1>();

  double sq = 0.0;
  for (size_t i = 0; i < pairs.size(); ++i) sq += (R * src.col(i) + t - dst.col(i)).squaredNorm();
  return std::sqrt(sq / pairs.size()) * 100.0;
}

std::vector<Vec3> sample_surfel_points(const SurfelMap& map, int n, std::uint64_t seed) {
  if (map.empty()) throw PreconditionError("sample_surfel_points: empty map");
  std::vector<Vec3> out;
  if (n <= 0) return out;

  std::vector<double> cdf(map.size());
  double acc = 0.0;
  for (int i = 0; i < map.size(); ++i) {
    acc += map[i].s.x() * map[i].s.y();  // area up to the common pi factor
    cdf[i] = acc;
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double r = uni(rng) * acc;
    const int id = int(std::lower_bound(cdf.begin(), cdf.end(), r) - cdf.begin());
    const Surfel& s = map[std::min(id, map.size() - 1)];
    double a, b;
    do {
      a = gauss(rng);
      b = gauss(rng);
    } while (a * a + b * b > 1.0);
    const Mat3 rot = s.r.toRotationMatrix();
    out.push_back(s.p + a * s.s.x() * rot.col(0) + b * s.s.y() * rot.col(1));
  }
  return out;
}

ReconReport recon_metrics(const std::vector<Vec3>& pred, const TriangleMesh& gt, double tau,
                          std::uint64_t seed) {
  if (pred.empty() || gt.empty())
    throw PreconditionError("recon_metrics: empty prediction or ground truth");

  ReconReport rep;
  rep.pred_samples = int(pred.size());

  MeshDistanceIndex gt_index(gt);
  double acc_sum = 0.0;
  int acc_under = 0;
  for (const Vec3& p : pred) {
    const double d = gt_index.distance(p);
    acc_sum += d;
    if (d < tau) ++acc_under;
  }
  rep.accuracy_cm = acc_sum / pred.size() * 100.0;
  rep.accuracy_ratio_pct = 100.0 * acc_under / double(pred.size());

  const std::vector<Vec3> gt_samples = sample_mesh_surface(gt, int(pred.size()), seed);
  rep.gt_samples = int(gt_samples.size());
  PointDistanceIndex pred_index(pred);
  double comp_sum = 0.0;
  int comp_under = 0;
  for (const Vec3& p : gt_samples) {
    const double d = pred_index.distance(p);
    comp_sum += d;
    if (d < tau) ++comp_under;
  }
  rep.completeness_cm = comp_sum / gt_samples.size() * 100.0;
  rep.completeness_ratio_pct = 100.0 * comp_under / double(gt_samples.size());
  return rep;
}

double psnr(const ImageV3& a, const ImageV3& b) {
  if (!a.same_size(b.width(), b.height()))
    throw PreconditionError("psnr: size mismatch");
  double mse = 0.0;
  for (size_t i = 0; i < a.size(); ++i) mse += (a[i] - b[i]).squaredNorm();
  mse /= double(a.size() * 3);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

namespace {

// 11-tap gaussian, sigma 1.5 (the standard SSIM window).
std::array<double, 11> ssim_kernel() {
  std::array<double, 11> k;
  double sum = 0.0;
  for (int i = 0; i < 11; ++i) {
    k[i] = std::exp(-sqr(i - 5) / (2.0 * sqr(1.5)));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

ImageD gaussian_filter(const ImageD& img) {
  static const std::array<double, 11> k = ssim_kernel();
  const int w = img.width(), h = img.height();
  ImageD tmp(w, h, 0.0), out(w, h, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -5; i <= 5; ++i) {
        const int xx = std::clamp(x + i, 0, w - 1);
        acc += k[i + 5] * img.at(xx, y);
      }
      tmp.at(x, y) = acc;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -5; i <= 5; ++i) {
        const int yy = std::clamp(y + i, 0, h - 1);
        acc += k[i + 5] * tmp.at(x, yy);
      }
      out.at(x, y) = acc;
    }
  return out;
}

double ssim_channel(const ImageD& a, const ImageD& b) {
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const int w = a.width(), h = a.height();
  ImageD aa(w, h), bb(w, h), ab(w, h);
  for (size_t i = 0; i < a.size(); ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const ImageD mu_a = gaussian_filter(a), mu_b = gaussian_filter(b);
  const ImageD s_aa = gaussian_filter(aa), s_bb = gaussian_filter(bb),
               s_ab = gaussian_filter(ab);
  double total = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double va = s_aa[i] - mu_a[i] * mu_a[i];
    const double vb = s_bb[i] - mu_b[i] * mu_b[i];
    const double cov = s_ab[i] - mu_a[i] * mu_b[i];
    total += ((2 * mu_a[i] * mu_b[i] + c1) * (2 * cov + c2)) /
             ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
  }
  return total / double(a.size());
}

}  // namespace

double ssim(const ImageV3& a, const ImageV3& b) {
  if (!a.same_size(b.width(), b.height()))
    throw PreconditionError("ssim: size mismatch");
  double sum = 0.0;
  for (int ch = 0; ch < 3; ++ch) {
    ImageD ca(a.width(), a.height()), cb(a.width(), a.height());
    for (size_t i = 0; i < a.size(); ++i) {
      ca[i] = a[i][ch];
      cb[i] = b[i][ch];
    }
    sum += ssim_channel(ca, cb);
  }
  return sum / 3.0;
}

}  // namespace sfr
