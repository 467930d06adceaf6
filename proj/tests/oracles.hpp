// Independent straight-line transcriptions used as test oracles. Everything
// here works on raw double buffers with explicit loops and stays clear of the
// library's op implementations.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace oracle {

struct Mat {
  int rows = 0, cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, 0.0) {}
  double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
};

inline Mat mm(const Mat& a, const Mat& b) {
  Mat out(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i)
    for (int k = 0; k < a.cols; ++k)
      for (int j = 0; j < b.cols; ++j) out.at(i, j) += a.at(i, k) * b.at(k, j);
  return out;
}

inline Mat tr(const Mat& a) {
  Mat out(a.cols, a.rows);
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < a.cols; ++j) out.at(j, i) = a.at(i, j);
  return out;
}

inline Mat softmax_rows(const Mat& a) {
  Mat out(a.rows, a.cols);
  for (int i = 0; i < a.rows; ++i) {
    double mx = a.at(i, 0);
    for (int j = 1; j < a.cols; ++j) mx = std::max(mx, a.at(i, j));
    double z = 0.0;
    for (int j = 0; j < a.cols; ++j) z += std::exp(a.at(i, j) - mx);
    for (int j = 0; j < a.cols; ++j) out.at(i, j) = std::exp(a.at(i, j) - mx) / z;
  }
  return out;
}

// --- numerics ---------------------------------------------------------

inline std::vector<double> conv2d_naive(const std::vector<double>& x, int B, int Cin, int H,
                                        int W, const std::vector<double>& w, int Cout, int kh,
                                        int kw, const std::vector<double>* bias, int stride,
                                        int padding, int& OH, int& OW) {
  OH = (H + 2 * padding - kh) / stride + 1;
  OW = (W + 2 * padding - kw) / stride + 1;
  std::vector<double> out(static_cast<std::size_t>(B) * Cout * OH * OW, 0.0);
  for (int b = 0; b < B; ++b)
    for (int co = 0; co < Cout; ++co)
      for (int oy = 0; oy < OH; ++oy)
        for (int ox = 0; ox < OW; ++ox) {
          double acc = bias ? (*bias)[static_cast<std::size_t>(co)] : 0.0;
          for (int ci = 0; ci < Cin; ++ci)
            for (int ky = 0; ky < kh; ++ky)
              for (int kx = 0; kx < kw; ++kx) {
                const int iy = oy * stride - padding + ky;
                const int ix = ox * stride - padding + kx;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                acc += x[((static_cast<std::size_t>(b) * Cin + ci) * H + iy) * W + ix] *
                       w[((static_cast<std::size_t>(co) * Cin + ci) * kh + ky) * kw + kx];
              }
          out[((static_cast<std::size_t>(b) * Cout + co) * OH + oy) * OW + ox] = acc;
        }
  return out;
}

inline std::vector<double> conv1d_naive(const std::vector<double>& x, int B, int Cin, int L,
                                        const std::vector<double>& w, int Cout, int k,
                                        const std::vector<double>* bias, int padding, int& OL) {
  OL = L + 2 * padding - k + 1;
  std::vector<double> out(static_cast<std::size_t>(B) * Cout * OL, 0.0);
  for (int b = 0; b < B; ++b)
    for (int co = 0; co < Cout; ++co)
      for (int o = 0; o < OL; ++o) {
        double acc = bias ? (*bias)[static_cast<std::size_t>(co)] : 0.0;
        for (int ci = 0; ci < Cin; ++ci)
          for (int kk = 0; kk < k; ++kk) {
            const int i = o - padding + kk;
            if (i < 0 || i >= L) continue;
            acc += x[(static_cast<std::size_t>(b) * Cin + ci) * L + i] *
                   w[(static_cast<std::size_t>(co) * Cin + ci) * k + kk];
          }
        out[(static_cast<std::size_t>(b) * Cout + co) * OL + o] = acc;
      }
  return out;
}

// --- AFFM (the fusion equations, transcribed) --------------------------

struct AffmOracleParams {
  std::vector<Mat> wk, wq, wv;  // one [d x D] triple per head
  Mat wo;                       // [h*d x D]
  Mat fc_w;                     // [D x 2D]
  std::vector<double> fc_b;     // [D]
};

inline Mat affm_oracle(const Mat& a_img, const Mat& a_ske, const AffmOracleParams& p) {
  const int D = a_img.rows, MI = a_img.cols;
  const int heads = static_cast<int>(p.wk.size());
  const int d = p.wk[0].rows;

  Mat heads_cat(MI, heads * d);
  for (int h = 0; h < heads; ++h) {
    Mat scores = mm(tr(mm(p.wk[static_cast<std::size_t>(h)], a_img)),
                    mm(p.wq[static_cast<std::size_t>(h)], a_ske));
    for (double& s : scores.v) s /= std::sqrt(static_cast<double>(d));
    Mat head = mm(softmax_rows(scores), tr(mm(p.wv[static_cast<std::size_t>(h)], a_ske)));
    for (int i = 0; i < MI; ++i)
      for (int j = 0; j < d; ++j) heads_cat.at(i, h * d + j) = head.at(i, j);
  }
  Mat weight_ske = tr(mm(heads_cat, p.wo));  // [D x MI]

  // bias: GAP + GMP of the skeleton feature, replicated MI times
  Mat bias(D, MI);
  for (int c = 0; c < D; ++c) {
    double avg = 0.0, mx = a_ske.at(c, 0);
    for (int j = 0; j < a_ske.cols; ++j) {
      avg += a_ske.at(c, j);
      mx = std::max(mx, a_ske.at(c, j));
    }
    avg /= a_ske.cols;
    for (int i = 0; i < MI; ++i) bias.at(c, i) = avg + mx;
  }

  Mat fused(2 * D, MI);
  for (int c = 0; c < D; ++c)
    for (int i = 0; i < MI; ++i) {
      fused.at(c, i) = a_img.at(c, i);
      fused.at(D + c, i) = weight_ske.at(c, i) + bias.at(c, i);
    }
  Mat out = mm(p.fc_w, fused);
  for (int c = 0; c < D; ++c)
    for (int i = 0; i < MI; ++i) out.at(c, i) += p.fc_b[static_cast<std::size_t>(c)];
  return out;
}

// --- MSSTFE global branch (pooling, attention, gate, re-weight, temporal
// stack), transcribed --------------------------------------------------

struct GlobalBranchOracleParams {
  Mat wk{2, 2}, wq{2, 2}, wv{2, 2};
  std::vector<double> gate_w;              // [1*2*1] = 2 entries
  double gate_b = 0.0;
  std::vector<std::vector<double>> t3_w;   // per part [C*C*3]
  std::vector<std::vector<double>> t3_b;   // per part [C]
  std::vector<double> s3_w;                // [C*C*1]
  std::vector<double> s3_b;                // [C]
  std::vector<std::vector<double>> t4_w;
  std::vector<std::vector<double>> t4_b;
};

// per-frame self-attention of the 2xM pooled map (the scaled-dot-product step)
inline Mat pool_attention(const Mat& pool, const Mat& wk, const Mat& wq, const Mat& wv) {
  Mat scores = mm(tr(mm(wk, pool)), mm(wq, pool));
  for (double& s : scores.v) s /= std::sqrt(2.0);
  return tr(mm(softmax_rows(scores), tr(mm(wv, pool))));  // [2 x M]
}

// x indexed [n][c][m]; applies part m's kernel-3 same-length conv over n.
inline std::vector<double> temporal_convs(const std::vector<double>& x, int N, int C, int M,
                                          const std::vector<std::vector<double>>& w,
                                          const std::vector<std::vector<double>>& b) {
  std::vector<double> out(x.size(), 0.0);
  for (int m = 0; m < M; ++m) {
    for (int co = 0; co < C; ++co) {
      for (int t = 0; t < N; ++t) {
        double acc = b[static_cast<std::size_t>(m)][static_cast<std::size_t>(co)];
        for (int ci = 0; ci < C; ++ci)
          for (int kk = 0; kk < 3; ++kk) {
            const int tt = t - 1 + kk;
            if (tt < 0 || tt >= N) continue;
            acc += x[(static_cast<std::size_t>(tt) * C + ci) * M + m] *
                   w[static_cast<std::size_t>(m)][(static_cast<std::size_t>(co) * C + ci) * 3 + kk];
          }
        out[(static_cast<std::size_t>(t) * C + co) * M + m] = acc;
      }
    }
  }
  return out;
}

inline std::vector<double> spatial_conv1(const std::vector<double>& x, int N, int C, int M,
                                         const std::vector<double>& w,
                                         const std::vector<double>& b) {
  // kernel-1 conv over the part axis = per-frame channel mix
  std::vector<double> out(x.size(), 0.0);
  for (int t = 0; t < N; ++t)
    for (int co = 0; co < C; ++co)
      for (int m = 0; m < M; ++m) {
        double acc = b[static_cast<std::size_t>(co)];
        for (int ci = 0; ci < C; ++ci) {
          acc += x[(static_cast<std::size_t>(t) * C + ci) * M + m] *
                 w[static_cast<std::size_t>(co) * C + ci];
        }
        out[(static_cast<std::size_t>(t) * C + co) * M + m] = acc;
      }
  return out;
}

inline std::vector<double> global_branch_oracle(const std::vector<double>& p, int N, int C,
                                                int M, const GlobalBranchOracleParams& gp,
                                                bool activation, double slope) {
  // Eq 15: channel GAP/GMP
  std::vector<Mat> pools;
  for (int t = 0; t < N; ++t) {
    Mat pool(2, M);
    for (int m = 0; m < M; ++m) {
      double avg = 0.0, mx = p[(static_cast<std::size_t>(t) * C + 0) * M + m];
      for (int c = 0; c < C; ++c) {
        const double val = p[(static_cast<std::size_t>(t) * C + c) * M + m];
        avg += val;
        mx = std::max(mx, val);
      }
      pool.at(0, m) = avg / C;
      pool.at(1, m) = mx;
    }
    pools.push_back(std::move(pool));
  }
  // Eq 16 then Eq 17: gate from the attended pool
  std::vector<double> atten(static_cast<std::size_t>(N) * M);
  for (int t = 0; t < N; ++t) {
    Mat a = pool_attention(pools[static_cast<std::size_t>(t)], gp.wk, gp.wq, gp.wv);
    for (int m = 0; m < M; ++m) {
      const double z = gp.gate_w[0] * a.at(0, m) + gp.gate_w[1] * a.at(1, m) + gp.gate_b;
      atten[static_cast<std::size_t>(t) * M + m] = 1.0 / (1.0 + std::exp(-z));
    }
  }
  // Eq 18: re-weight with residual
  std::vector<double> pg(p.size());
  for (int t = 0; t < N; ++t)
    for (int c = 0; c < C; ++c)
      for (int m = 0; m < M; ++m) {
        const std::size_t i = (static_cast<std::size_t>(t) * C + c) * M + m;
        pg[i] = atten[static_cast<std::size_t>(t) * M + m] * p[i] + p[i];
      }
  // Eq 19: temporal convs
  std::vector<double> pgt = temporal_convs(pg, N, C, M, gp.t3_w, gp.t3_b);
  // Eq 20: one more spatial+temporal stage
  std::vector<double> stg =
      temporal_convs(spatial_conv1(pgt, N, C, M, gp.s3_w, gp.s3_b), N, C, M, gp.t4_w, gp.t4_b);
  if (activation) {
    for (double& v : stg) v = v >= 0.0 ? v : slope * v;
  }
  return stg;
}

// --- FD pooling (Eq 22), transcribed -----------------------------------

inline std::vector<double> fd_pool_oracle(const std::vector<double>& out, int parts, int out_c,
                                          int op, const std::string& mode) {
  const int group = out_c / op;
  std::vector<double> pooled(static_cast<std::size_t>(parts) * op);
  auto primitive = [&](const double* g, const std::string& m) {
    if (m == "average") {
      double s = 0.0;
      for (int i = 0; i < group; ++i) s += g[i];
      return s / group;
    }
    if (m == "max") return *std::max_element(g, g + group);
    if (m == "min") return *std::min_element(g, g + group);
    std::vector<double> buf(g, g + group);
    std::sort(buf.begin(), buf.end());
    return group % 2 ? buf[static_cast<std::size_t>(group / 2)]
                     : 0.5 * (buf[static_cast<std::size_t>(group / 2 - 1)] +
                              buf[static_cast<std::size_t>(group / 2)]);
  };
  for (int pr = 0; pr < parts; ++pr)
    for (int k = 0; k < op; ++k) {
      const double* g = out.data() + static_cast<std::size_t>(pr) * out_c +
                        static_cast<std::size_t>(k) * group;
      double v;
      if (mode == "average" || mode == "max" || mode == "min" || mode == "median") {
        v = primitive(g, mode);
      } else if (mode == "average+max") {
        v = 0.5 * (primitive(g, "average") + primitive(g, "max"));
      } else if (mode == "average+min") {
        v = 0.5 * (primitive(g, "average") + primitive(g, "min"));
      } else if (mode == "average+median") {
        v = 0.5 * (primitive(g, "average") + primitive(g, "median"));
      } else {
        throw std::runtime_error("oracle: bad mode " + mode);
      }
      pooled[static_cast<std::size_t>(pr) * op + k] = v;
    }
  return pooled;
}

// --- BA+ triplet loss, brute force --------------------------------------

inline double triplet_loss_oracle(const std::vector<double>& emb, int B, int parts, int dim,
                                  const std::vector<int>& labels, double margin,
                                  bool nonzero_mean) {
  auto dist = [&](int i, int j, int m) {
    double sq = 0.0;
    for (int q = 0; q < dim; ++q) {
      const double d = emb[(static_cast<std::size_t>(i) * parts + m) * dim + q] -
                       emb[(static_cast<std::size_t>(j) * parts + m) * dim + q];
      sq += d * d;
    }
    return std::sqrt(sq);
  };
  double total = 0.0;
  for (int m = 0; m < parts; ++m) {
    double s = 0.0;
    int count_all = 0, count_nonzero = 0;
    for (int a = 0; a < B; ++a)
      for (int p = 0; p < B; ++p) {
        if (p == a || labels[static_cast<std::size_t>(p)] != labels[static_cast<std::size_t>(a)]) continue;
        for (int n = 0; n < B; ++n) {
          if (labels[static_cast<std::size_t>(n)] == labels[static_cast<std::size_t>(a)]) continue;
          const double term = std::max(0.0, margin + dist(a, p, m) - dist(a, n, m));
          s += term;
          ++count_all;
          if (term > 0.0) ++count_nonzero;
        }
      }
    if (nonzero_mean) {
      total += count_nonzero > 0 ? s / count_nonzero : 0.0;
    } else {
      total += count_all > 0 ? s / count_all : 0.0;
    }
  }
  return total / parts;
}

// --- retrieval metrics, brute force --------------------------------------

struct RetrievalInstance {
  // distances[p][g], relevant[p][g], admissible[p][g]
  std::vector<std::vector<double>> dist;
  std::vector<std::vector<bool>> relevant;
  std::vector<std::vector<bool>> admissible;
};

inline std::vector<int> ranked_gallery(const RetrievalInstance& in, int p) {
  std::vector<int> idx;
  for (int g = 0; g < static_cast<int>(in.dist[static_cast<std::size_t>(p)].size()); ++g) {
    if (in.admissible[static_cast<std::size_t>(p)][static_cast<std::size_t>(g)]) idx.push_back(g);
  }
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    return in.dist[static_cast<std::size_t>(p)][static_cast<std::size_t>(a)] <
           in.dist[static_cast<std::size_t>(p)][static_cast<std::size_t>(b)];
  });
  return idx;
}

inline double rank_k_oracle(const RetrievalInstance& in, int k) {
  int hits = 0;
  const int probes = static_cast<int>(in.dist.size());
  for (int p = 0; p < probes; ++p) {
    auto order = ranked_gallery(in, p);
    for (int i = 0; i < std::min<int>(k, static_cast<int>(order.size())); ++i) {
      if (in.relevant[static_cast<std::size_t>(p)][static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / probes;
}

inline double mean_ap_oracle(const RetrievalInstance& in) {
  const int probes = static_cast<int>(in.dist.size());
  double total = 0.0;
  for (int p = 0; p < probes; ++p) {
    auto order = ranked_gallery(in, p);
    int seen = 0;
    double ap = 0.0;
    for (int i = 0; i < static_cast<int>(order.size()); ++i) {
      if (in.relevant[static_cast<std::size_t>(p)][static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]) {
        ++seen;
        ap += static_cast<double>(seen) / (i + 1);
      }
    }
    total += ap / seen;
  }
  return total / probes;
}

inline double mean_inp_oracle(const RetrievalInstance& in) {
  const int probes = static_cast<int>(in.dist.size());
  double total = 0.0;
  for (int p = 0; p < probes; ++p) {
    auto order = ranked_gallery(in, p);
    int count = 0, hardest = 0;
    for (int i = 0; i < static_cast<int>(order.size()); ++i) {
      if (in.relevant[static_cast<std::size_t>(p)][static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]) {
        ++count;
        hardest = i + 1;
      }
    }
    total += static_cast<double>(count) / hardest;
  }
  return total / probes;
}

}  // namespace oracle
