// Independent reference computations for the tests. Everything here is plain
// loops over std::vector and shares no code with the library beyond its
// public data types.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "promptfocus/dcp.hpp"
#include "promptfocus/embedding_store.hpp"
#include "promptfocus/nn.hpp"
#include "promptfocus/pff.hpp"
#include "promptfocus/tensor.hpp"

namespace oracle {

struct Mat {
  std::size_t rows = 0, cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}
  explicit Mat(const pf::Tensor& t)
      : rows(t.rank() == 1 ? 1 : t.rows()), cols(t.rank() == 1 ? t.numel() : t.cols()),
        v(t.data().begin(), t.data().end()) {}
  double& operator()(std::size_t r, std::size_t c) { return v[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
};

inline Mat matmul(const Mat& a, const Mat& b) {
  Mat out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < b.cols; ++j) {
      long double s = 0.0L;
      for (std::size_t p = 0; p < a.cols; ++p) s += static_cast<long double>(a(i, p)) * b(p, j);
      out(i, j) = static_cast<double>(s);
    }
  return out;
}

inline Mat transpose(const Mat& a) {
  Mat out(a.cols, a.rows);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) out(j, i) = a(i, j);
  return out;
}

inline Mat linear(const Mat& x, const pf::nn::Linear& l) {
  Mat out = matmul(x, Mat(l.weight));
  const auto b = l.bias.data();
  for (std::size_t i = 0; i < out.rows; ++i)
    for (std::size_t j = 0; j < out.cols; ++j) out(i, j) += b[j];
  return out;
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

inline Mat mlp(const Mat& x, const pf::nn::Mlp& m) {
  Mat h = linear(x, m.fc1);
  for (auto& e : h.v) e = gelu(e);
  return linear(h, m.fc2);
}

inline std::vector<double> softmax(std::span<const double> x) {
  long double mx = *std::max_element(x.begin(), x.end());
  long double sum = 0.0L;
  std::vector<long double> e(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) sum += e[i] = std::exp(static_cast<long double>(x[i]) - mx);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<double>(e[i] / sum);
  return out;
}

/// Multi-head attention one head and one query row at a time.
inline Mat attention(const Mat& query_src, const Mat& kv_src, const pf::nn::AttentionParams& p) {
  const Mat q = linear(query_src, p.q), k = linear(kv_src, p.k), v = linear(kv_src, p.v);
  const std::size_t d = q.cols, dh = d / p.heads;
  Mat concat(q.rows, d);
  for (std::size_t h = 0; h < p.heads; ++h) {
    for (std::size_t i = 0; i < q.rows; ++i) {
      std::vector<double> scores(k.rows);
      for (std::size_t j = 0; j < k.rows; ++j) {
        double s = 0.0;
        for (std::size_t t = 0; t < dh; ++t) s += q(i, h * dh + t) * k(j, h * dh + t);
        scores[j] = s / std::sqrt(static_cast<double>(dh));
      }
      const auto w = softmax(scores);
      for (std::size_t t = 0; t < dh; ++t) {
        double s = 0.0;
        for (std::size_t j = 0; j < k.rows; ++j) s += w[j] * v(j, h * dh + t);
        concat(i, h * dh + t) = s;
      }
    }
  }
  return linear(concat, p.out);
}

inline Mat concat_rows(const Mat& a, const Mat& b) {
  Mat out(a.rows + b.rows, a.cols);
  std::copy(a.v.begin(), a.v.end(), out.v.begin());
  std::copy(b.v.begin(), b.v.end(), out.v.begin() + static_cast<std::ptrdiff_t>(a.v.size()));
  return out;
}

inline Mat mean_broadcast(const Mat& x, std::size_t rows) {
  Mat out(rows, x.cols);
  for (std::size_t j = 0; j < x.cols; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i) s += x(i, j);
    for (std::size_t r = 0; r < rows; ++r) out(r, j) = s / static_cast<double>(x.rows);
  }
  return out;
}

/// The focuser block composed stage by stage.
inline Mat pff_block(const Mat& f_i, const Mat& f_cls, std::span<const double> p_sim,
                     const pf::pff::PffParams& p, const pf::pff::PffOptions& o) {
  using pf::pff::AttentionDirection;
  using pf::pff::Stages;
  Mat scaled = f_cls;
  for (std::size_t r = 0; r < scaled.rows; ++r)
    for (std::size_t c = 0; c < scaled.cols; ++c) scaled(r, c) *= p_sim[r];
  const Mat fused = mlp(scaled, p.fusion);
  const Mat enh = concat_rows(Mat(p.tokens), fused);
  const Mat text = o.stages == Stages::CrossOnly ? enh : attention(enh, enh, p.self_attn);
  Mat update;
  if (o.stages == Stages::SelfOnly) {
    update = mlp(mean_broadcast(text, 1), p.output);
    update = mean_broadcast(update, f_i.rows);
  } else if (o.direction == AttentionDirection::ImageQuery) {
    update = mlp(attention(f_i, text, p.cross_attn), p.output);
  } else {
    update = mean_broadcast(mlp(mean_broadcast(attention(text, f_i, p.cross_attn), 1), p.output), f_i.rows);
  }
  for (std::size_t i = 0; i < update.v.size(); ++i) update.v[i] += f_i.v[i];
  return update;
}

/// exp(cos/T) normalized, in extended precision.
inline std::vector<double> similarity(std::span<const double> img, const pf::EmbeddingTable& t, double temp) {
  std::vector<double> logits(t.count());
  double in = 0.0;
  for (double x : img) in += x * x;
  in = std::sqrt(in);
  for (std::size_t c = 0; c < t.count(); ++c) {
    double s = 0.0;
    for (std::size_t j = 0; j < t.dim(); ++j) s += img[j] * t.row(c)[j];
    logits[c] = s / in / temp;
  }
  return softmax(logits);
}

inline std::vector<std::int64_t> confusion(std::span<const int> pred, std::span<const int> truth, int c) {
  std::vector<std::int64_t> m(static_cast<std::size_t>(c * c), 0);
  for (std::size_t i = 0; i < pred.size(); ++i) ++m[static_cast<std::size_t>(truth[i] * c + pred[i])];
  return m;
}

// ---- prompt selection --------------------------------------------------------

inline double euclid(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

/// Agglomerative average linkage recomputing every cluster distance from
/// its members; stops before the first merge above `threshold`. Returns
/// clusters as lists of indices into `rows`.
inline std::vector<std::vector<std::size_t>> average_linkage_clusters(
    const std::vector<std::vector<double>>& rows, double threshold) {
  std::vector<std::vector<std::size_t>> clusters;
  for (std::size_t i = 0; i < rows.size(); ++i) clusters.push_back({i});
  while (clusters.size() > 1) {
    double best = INFINITY;
    std::size_t ba = 0, bb = 0;
    for (std::size_t a = 0; a < clusters.size(); ++a)
      for (std::size_t b = a + 1; b < clusters.size(); ++b) {
        double s = 0.0;
        for (auto i : clusters[a])
          for (auto j : clusters[b]) s += euclid(rows[i], rows[j]);
        s /= static_cast<double>(clusters[a].size() * clusters[b].size());
        if (s < best) {
          best = s;
          ba = a;
          bb = b;
        }
      }
    if (best > threshold) break;
    clusters[ba].insert(clusters[ba].end(), clusters[bb].begin(), clusters[bb].end());
    clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(bb));
  }
  return clusters;
}

struct Selected {
  std::vector<std::string> cls;
  std::vector<double> sim;
  double tau_f = 0.0, tau_c = 0.0;
  bool operator==(const Selected&) const = default;
};

/// One filter + cluster pass: members strictly above tau_f; per cluster the
/// member most cosine-similar to the centroid (ties within 1e-12 go to the
/// higher probability, then the earlier library entry); sorted by
/// probability, descending.
inline Selected filter_and_cluster(std::span<const double> probs, const pf::EmbeddingTable& table,
                                   double tau_f, double distance) {
  std::vector<std::size_t> idx;
  for (std::size_t l = 0; l < probs.size(); ++l)
    if (probs[l] > tau_f) idx.push_back(l);
  Selected out;
  if (idx.empty()) return out;
  std::vector<std::vector<double>> rows;
  for (auto l : idx) rows.emplace_back(table.row(l).begin(), table.row(l).end());
  std::vector<std::size_t> reps;
  for (const auto& members : average_linkage_clusters(rows, distance)) {
    std::vector<double> cen(table.dim(), 0.0);
    for (auto m : members)
      for (std::size_t j = 0; j < cen.size(); ++j) cen[j] += rows[m][j];
    double cn = 0.0;
    for (double x : cen) cn += x * x;
    cn = std::sqrt(cn);
    auto cosine = [&](std::size_t m) {
      double s = 0.0;
      for (std::size_t j = 0; j < cen.size(); ++j) s += rows[m][j] * cen[j];
      return s / cn;
    };
    std::size_t best = members[0];
    for (auto m : members) {
      const double cm = cosine(m), cb = cosine(best);
      const double pm = probs[idx[m]], pb = probs[idx[best]];
      const bool more_central = cm > cb + 1e-12;
      const bool tie = std::abs(cm - cb) <= 1e-12;
      const bool sim_tie = std::abs(pm - pb) <= 1e-9 * std::max(pm, pb);
      if (more_central || (tie && pm > pb && !sim_tie) || (tie && sim_tie && idx[m] < idx[best])) best = m;
    }
    reps.push_back(idx[best]);
  }
  std::sort(reps.begin(), reps.end(), [&](std::size_t a, std::size_t b) {
    return probs[a] != probs[b] ? probs[a] > probs[b] : a < b;
  });
  for (auto l : reps) {
    out.cls.push_back(table.names()[l]);
    out.sim.push_back(probs[l]);
  }
  return out;
}

/// Replays the threshold schedule: pass k uses tau_f_min + k·Δτ_f and
/// tau_c_min + k·Δτ_c; passes continue while the latest selection (or the
/// whole library before the first non-empty pass) exceeds max_classes and
/// both schedules have a next value. Returns the last non-empty pass, or an
/// empty result.
inline Selected replay_schedule(std::span<const double> probs, const pf::EmbeddingTable& table,
                                const pf::dcp::DcpConfig& cfg) {
  Selected last;
  std::size_t current = probs.size();
  for (std::size_t k = 0;; ++k) {
    const double tf = cfg.tau_f_min + static_cast<double>(k) * cfg.delta_tau_f;
    const double tc = cfg.tau_c_min + static_cast<double>(k) * cfg.delta_tau_c;
    Selected s = filter_and_cluster(probs, table, tf, tc * cfg.tau_c_scale);
    if (!s.cls.empty()) {
      s.tau_f = tf;
      s.tau_c = tc;
      last = s;
      current = s.cls.size();
    }
    const double next_f = cfg.tau_f_min + static_cast<double>(k + 1) * cfg.delta_tau_f;
    const double next_c = cfg.tau_c_min + static_cast<double>(k + 1) * cfg.delta_tau_c;
    const bool more = next_f <= cfg.tau_f_max + 1e-9 * cfg.delta_tau_f &&
                      next_c <= cfg.tau_c_max + 1e-9 * cfg.delta_tau_c;
    if (current <= cfg.max_classes || !more) break;
  }
  return last;
}

}  // namespace oracle
