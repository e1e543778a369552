#include "flashcg/analysis.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "flashcg/neighbor.hpp"

namespace flashcg {

namespace {

using Mat3 = Eigen::Matrix3d;
using Points = Eigen::Matrix<double, Eigen::Dynamic, 3>;

Points to_points(const Positions<double>& x, std::size_t begin, std::size_t end) {
  Points p(static_cast<Eigen::Index>(end - begin), 3);
  for (std::size_t i = begin; i < end; ++i)
    for (int k = 0; k < 3; ++k) p(static_cast<Eigen::Index>(i - begin), k) = x[i][k];
  return p;
}

struct RigidFit {
  Mat3 r;
  Eigen::RowVector3d t;
};

RigidFit fit(const Points& x, const Points& ref) {
  const Eigen::RowVector3d cx = x.colwise().mean();
  const Eigen::RowVector3d cr = ref.colwise().mean();
  const Points a = x.rowwise() - cx;
  const Points b = ref.rowwise() - cr;
  const Mat3 h = a.transpose() * b;
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  if (!(s(1) > 1e-12 * std::max(1.0, s(0)))) throw ConfigError("kabsch_align: degenerate (collinear) structure");
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0 ? -1.0 : 1.0;
  const Mat3 r = svd.matrixV() * d * svd.matrixU().transpose();
  return {r, cr - (r * cx.transpose()).transpose()};
}

void check_pair(const Positions<double>& x, const Positions<double>& x_ref) {
  if (x.size() != x_ref.size()) throw ConfigError("structure sizes differ");
  if (x.size() < 3) throw ConfigError("alignment needs at least 3 beads");
}

Alignment to_alignment(const RigidFit& f) {
  Alignment a;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) a.rotation[i][j] = f.r(i, j);
    a.translation[i] = f.t(i);
  }
  return a;
}

}  // namespace

Positions<double> apply_alignment(const Alignment& a, const Positions<double>& x) {
  Positions<double> out(x.size());
  for (std::size_t n = 0; n < x.size(); ++n)
    for (int i = 0; i < 3; ++i)
      out[n][i] = a.rotation[i][0] * x[n][0] + a.rotation[i][1] * x[n][1] + a.rotation[i][2] * x[n][2] +
                  a.translation[i];
  return out;
}

Alignment kabsch_align(const Positions<double>& x, const Positions<double>& x_ref) {
  check_pair(x, x_ref);
  Alignment a = to_alignment(fit(to_points(x, 0, x.size()), to_points(x_ref, 0, x_ref.size())));
  const auto moved = apply_alignment(a, x);
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto d = moved[i] - x_ref[i];
    sum += d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
  }
  a.rmsd = std::sqrt(sum / static_cast<double>(x.size()));
  return a;
}

double rmsd(const Positions<double>& x, const Positions<double>& x_ref) {
  return kabsch_align(x, x_ref).rmsd;
}

ContactSet build_contacts(const Positions<double>& x_ref, double cutoff, int min_separation) {
  ContactSet set;
  const int n = static_cast<int>(x_ref.size());
  for (int i = 0; i < n; ++i)
    for (int j = i + min_separation; j < n; ++j) {
      const double r = norm(x_ref[i] - x_ref[j]);
      if (r < cutoff && r > 0.0) set.pairs.push_back({i, j, r});
    }
  return set;
}

double contact_value(double r, double r0, double beta, double lambda) {
  return 1.0 / (1.0 + std::exp(beta * (r - lambda * r0)));
}

double fraction_native_contacts(const Positions<double>& x, const ContactSet& contacts, double beta,
                                double lambda) {
  if (contacts.pairs.empty()) throw ConfigError("fraction of native contacts: empty contact set");
  double sum = 0.0;
  for (const auto& c : contacts.pairs) {
    if (c.i < 0 || c.j < 0 || static_cast<std::size_t>(std::max(c.i, c.j)) >= x.size())
      throw ConfigError("contact refers to a bead outside the structure");
    sum += contact_value(norm(x[c.i] - x[c.j]), c.r0, beta, lambda);
  }
  return sum / static_cast<double>(contacts.pairs.size());
}

GdtScore gdt_ts(const Positions<double>& x, const Positions<double>& x_ref) {
  check_pair(x, x_ref);
  constexpr std::array<double, 4> cutoffs{0.1, 0.2, 0.4, 0.8};
  const std::size_t n = x.size();
  const Points px = to_points(x, 0, n);
  const Points pr = to_points(x_ref, 0, n);
  GdtScore out;
  auto score_fit = [&](const RigidFit& f) {
    std::array<std::size_t, 4> within{};
    for (std::size_t i = 0; i < n; ++i) {
      const Eigen::RowVector3d m = (f.r * px.row(static_cast<Eigen::Index>(i)).transpose()).transpose() + f.t;
      const double d = (m - pr.row(static_cast<Eigen::Index>(i))).norm();
      for (std::size_t c = 0; c < cutoffs.size(); ++c)
        if (d <= cutoffs[c]) ++within[c];
    }
    for (std::size_t c = 0; c < cutoffs.size(); ++c)
      out.fractions[c] = std::max(out.fractions[c], static_cast<double>(within[c]) / static_cast<double>(n));
  };
  score_fit(fit(px, pr));
  for (std::size_t len : {n / 2, n / 4}) {
    if (len < 3) continue;
    for (std::size_t b = 0; b + len <= n; ++b) {
      try {
        score_fit(fit(px.middleRows(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(len)),
                      pr.middleRows(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(len))));
      } catch (const ConfigError&) {
        // collinear window, no unique superposition
      }
    }
  }
  out.score = (out.fractions[0] + out.fractions[1] + out.fractions[2] + out.fractions[3]) / 4.0;
  return out;
}

std::vector<double> savitzky_golay(const std::vector<double>& series, int window, int order) {
  if (window < 1 || window % 2 == 0 || order < 0 || order >= window)
    throw ConfigError("savitzky_golay: need an odd window larger than the order");
  const int n = static_cast<int>(series.size());
  const int half = window / 2;
  std::vector<double> out(series.size());
  for (int i = 0; i < n; ++i) {
    const int lo = std::max(0, i - half);
    const int hi = std::min(n - 1, i + half);
    const int m = hi - lo + 1;
    const int deg = std::min(order, m - 1);
    // Least-squares fit in local coordinates centred on i, evaluated at 0.
    Eigen::MatrixXd a(m, deg + 1);
    Eigen::VectorXd y(m);
    for (int r = 0; r < m; ++r) {
      const double t = static_cast<double>(lo + r - i);
      double p = 1.0;
      for (int c = 0; c <= deg; ++c) {
        a(r, c) = p;
        p *= t;
      }
      y(r) = series[static_cast<std::size_t>(lo + r)];
    }
    out[static_cast<std::size_t>(i)] = a.colPivHouseholderQr().solve(y)(0);
  }
  return out;
}

double largest_metastable_q(const std::vector<double>& q) {
  if (q.empty()) throw ConfigError("largest_metastable_q: empty series");
  if (std::all_of(q.begin(), q.end(), [&](double v) { return v == q.front(); })) return q.front();
  if (q.size() < static_cast<std::size_t>(kSmoothWindow))
    throw ConfigError("largest_metastable_q: series shorter than the smoothing window");
  std::vector<double> density(kQBins, 0.0);
  for (double v : q) {
    const int b = std::clamp(static_cast<int>(std::floor(v * kQBins)), 0, kQBins - 1);
    density[b] += 1.0;
  }
  for (auto& d : density) d /= static_cast<double>(q.size()) / kQBins;
  const auto smooth = savitzky_golay(density, kSmoothWindow, kSmoothOrder);
  const double peak = *std::max_element(smooth.begin(), smooth.end());
  auto center = [](int b) { return (b + 0.5) / kQBins; };
  for (int b = kQBins - 2; b >= 1; --b)
    if (smooth[b] > smooth[b - 1] && smooth[b] > smooth[b + 1] && smooth[b] >= 0.05 * peak) return center(b);
  return center(static_cast<int>(std::max_element(smooth.begin(), smooth.end()) - smooth.begin()));
}

FrameGraphStats frame_graph_stats(const Positions<double>& x, double cutoff) {
  FrameGraphStats s;
  const auto nl = build_neighbors_cells(x, cutoff);
  s.edges = static_cast<std::int64_t>(nl.src.size());
  std::vector<int> degree(x.size(), 0);
  double band = 0.0;
  for (std::size_t e = 0; e < nl.src.size(); ++e) {
    ++degree[nl.dst[e]];
    const int w = std::abs(nl.dst[e] - nl.src[e]);
    band += w;
    s.max_bandwidth = std::max(s.max_bandwidth, w);
  }
  if (!x.empty()) s.mean_degree = static_cast<double>(s.edges) / static_cast<double>(x.size());
  if (!degree.empty()) s.max_degree = *std::max_element(degree.begin(), degree.end());
  if (s.edges > 0) s.mean_bandwidth = band / static_cast<double>(s.edges);
  return s;
}

std::vector<FrameGraphStats> graph_stats(const std::vector<TrajectoryFrame>& frames, double cutoff) {
  std::vector<FrameGraphStats> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(frame_graph_stats(f.positions, cutoff));
  return out;
}

}  // namespace flashcg
