#include "msaff/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "msaff/ops.hpp"

namespace msaff {

Tensor ba_triplet_loss(const TripletBatch& batch, double margin,
                       const std::string& reduction) {
  const Tensor& emb = batch.embeddings;
  if (!emb.defined() || emb.dim() != 3) {
    throw ShapeError("ba_triplet_loss: embeddings must be [B,P,out_c]");
  }
  const int b = emb.shape()[0];
  const int parts = emb.shape()[1];
  const int dim = emb.shape()[2];
  if (static_cast<int>(batch.labels.size()) != b) {
    throw ShapeError("ba_triplet_loss: label count does not match batch size");
  }
  std::set<int> distinct(batch.labels.begin(), batch.labels.end());
  if (distinct.size() < 2) {
    throw UsageError("ba_triplet_loss: batch holds a single identity; loss undefined");
  }
  if (reduction != "nonzero_mean" && reduction != "mean") {
    throw ConfigError("ba_triplet_loss: unknown reduction " + reduction);
  }

  std::vector<Tensor> part_losses;
  part_losses.reserve(static_cast<std::size_t>(parts));
  std::vector<Tensor> rows(static_cast<std::size_t>(b));
  std::vector<std::vector<Tensor>> dist(static_cast<std::size_t>(b),
                                        std::vector<Tensor>(static_cast<std::size_t>(b)));
  bool any_triplet = false;
  for (int m = 0; m < parts; ++m) {
    Tensor x = reshape(slice(emb, 1, m, 1), {b, dim});
    for (int i = 0; i < b; ++i) rows[static_cast<std::size_t>(i)] = slice(x, 0, i, 1);
    for (int i = 0; i < b; ++i) {
      for (int j = i + 1; j < b; ++j) {
        Tensor diff = sub(rows[static_cast<std::size_t>(i)], rows[static_cast<std::size_t>(j)]);
        Tensor d = sqrt(sum(mul(diff, diff)));
        dist[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = d;
        dist[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] = d;
      }
    }
    std::vector<Tensor> terms;
    for (int a = 0; a < b; ++a) {
      for (int p = 0; p < b; ++p) {
        if (p == a || batch.labels[static_cast<std::size_t>(p)] != batch.labels[static_cast<std::size_t>(a)]) continue;
        for (int n = 0; n < b; ++n) {
          if (batch.labels[static_cast<std::size_t>(n)] == batch.labels[static_cast<std::size_t>(a)]) continue;
          Tensor gap = sub(dist[static_cast<std::size_t>(a)][static_cast<std::size_t>(p)],
                           dist[static_cast<std::size_t>(a)][static_cast<std::size_t>(n)]);
          terms.push_back(relu(add_scalar(gap, margin)));
        }
      }
    }
    if (terms.empty()) continue;
    any_triplet = true;
    Tensor stacked = concat(terms, 0);
    if (reduction == "nonzero_mean") {
      int nonzero = 0;
      for (double v : stacked.data()) {
        if (v > 0.0) ++nonzero;
      }
      part_losses.push_back(nonzero == 0
                                ? Tensor::zeros({1})
                                : mul_scalar(sum(stacked), 1.0 / nonzero));
    } else {
      part_losses.push_back(mul_scalar(sum(stacked), 1.0 / static_cast<double>(terms.size())));
    }
  }
  if (!any_triplet) {
    throw UsageError("ba_triplet_loss: batch contains no (anchor, positive, negative) triplet");
  }
  return mul_scalar(sum(concat(part_losses, 0)), 1.0 / static_cast<double>(parts));
}

std::vector<SampledSequence> sample_batch(const std::vector<SequenceRef>& sequences, int p,
                                          int k, int n_frames, std::mt19937_64& rng) {
  std::map<int, std::vector<int>> by_label;  // label -> positions in `sequences`
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    by_label[sequences[i].label].push_back(static_cast<int>(i));
  }
  if (static_cast<int>(by_label.size()) < p) {
    throw DataError("sample_batch: dataset has " + std::to_string(by_label.size()) +
                    " identities, need p=" + std::to_string(p));
  }
  std::vector<int> labels;
  labels.reserve(by_label.size());
  for (const auto& [label, _] : by_label) labels.push_back(label);
  // partial Fisher-Yates: first p entries are a uniform distinct sample
  for (int i = 0; i < p; ++i) {
    std::uniform_int_distribution<int> pick(i, static_cast<int>(labels.size()) - 1);
    std::swap(labels[static_cast<std::size_t>(i)], labels[static_cast<std::size_t>(pick(rng))]);
  }

  std::vector<SampledSequence> batch;
  batch.reserve(static_cast<std::size_t>(p) * k);
  for (int i = 0; i < p; ++i) {
    const auto& pool = by_label[labels[static_cast<std::size_t>(i)]];
    std::vector<int> chosen;
    if (static_cast<int>(pool.size()) >= k) {
      std::vector<int> shuffled = pool;
      for (int j = 0; j < k; ++j) {
        std::uniform_int_distribution<int> pick(j, static_cast<int>(shuffled.size()) - 1);
        std::swap(shuffled[static_cast<std::size_t>(j)], shuffled[static_cast<std::size_t>(pick(rng))]);
      }
      chosen.assign(shuffled.begin(), shuffled.begin() + k);
    } else {
      std::uniform_int_distribution<int> pick(0, static_cast<int>(pool.size()) - 1);
      for (int j = 0; j < k; ++j) chosen.push_back(pool[static_cast<std::size_t>(pick(rng))]);
    }
    for (int idx : chosen) {
      const SequenceRef& ref = sequences[static_cast<std::size_t>(idx)];
      std::vector<int> frames;
      frames.reserve(static_cast<std::size_t>(n_frames));
      if (ref.frame_count >= n_frames) {
        std::vector<int> all(static_cast<std::size_t>(ref.frame_count));
        std::iota(all.begin(), all.end(), 0);
        for (int j = 0; j < n_frames; ++j) {
          std::uniform_int_distribution<int> pick(j, ref.frame_count - 1);
          std::swap(all[static_cast<std::size_t>(j)], all[static_cast<std::size_t>(pick(rng))]);
        }
        frames.assign(all.begin(), all.begin() + n_frames);
      } else {
        std::uniform_int_distribution<int> pick(0, ref.frame_count - 1);
        for (int j = 0; j < n_frames; ++j) frames.push_back(pick(rng));
      }
      std::sort(frames.begin(), frames.end());
      batch.push_back(SampledSequence{ref.entry, std::move(frames), ref.label});
    }
  }
  return batch;
}

Adam::Adam(double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(ParameterStore& store, double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (const auto& [name, param] : store) {
    const auto& value = param.data();
    const Tensor grad = param.grad();
    const auto& g = grad.data();
    for (double gv : g) {
      if (!std::isfinite(gv)) {
        throw NumericError("non-finite gradient for parameter " + name);
      }
    }
    State& st = state_[name];
    if (st.m.empty()) {
      st.m.assign(value.size(), 0.0);
      st.v.assign(value.size(), 0.0);
    }
    std::vector<double> updated(value.size());
    for (std::size_t i = 0; i < value.size(); ++i) {
      st.m[i] = beta1_ * st.m[i] + (1.0 - beta1_) * g[i];
      st.v[i] = beta2_ * st.v[i] + (1.0 - beta2_) * g[i] * g[i];
      const double mhat = st.m[i] / bc1;
      const double vhat = st.v[i] / bc2;
      updated[i] = value[i] - lr * mhat / (std::sqrt(vhat) + eps_);
    }
    store.set(name, Tensor::from_data(param.shape(), std::move(updated), true));
  }
}

Trainer::Trainer(const MsaffModel& model, ParameterStore& store, const Dataset& dataset,
                 uint64_t seed)
    : model_(model), store_(store), dataset_(dataset), rng_(seed) {
  std::map<std::string, int> label_of;
  const auto train_indices = dataset.train_entry_indices();
  for (int idx : train_indices) {
    const auto& entry = dataset.entries[static_cast<std::size_t>(idx)];
    auto [it, _] = label_of.emplace(entry.subject, static_cast<int>(label_of.size()));
    refs_.push_back(SequenceRef{idx, it->second, entry.silhouette_frames.shape()[0]});
  }
}

double Trainer::step(int64_t iteration) {
  const auto& tc = model_.config().training;
  const double lr = tc.schedule.lr_at(iteration);
  auto sampled = sample_batch(refs_, tc.p, tc.k, model_.config().frames_n, rng_);

  // Members run sequentially: graph node ordering feeds the backward
  // accumulation order, and training must be bit-reproducible per seed.
  std::vector<Tensor> members;
  TripletBatch batch;
  members.reserve(sampled.size());
  for (const auto& s : sampled) {
    auto [sil, ske] = subsample(dataset_.entries[static_cast<std::size_t>(s.entry)], s.frames);
    GaitEmbedding e = model_.forward(sil, ske, store_);
    const Shape& es = e.values.shape();
    members.push_back(reshape(e.values, {1, es[0], es[1]}));
    batch.labels.push_back(s.label);
  }
  batch.embeddings = concat(members, 0);

  Tensor loss = ba_triplet_loss(batch, tc.margin, tc.reduction);
  const double loss_value = loss.item();
  if (!std::isfinite(loss_value)) {
    throw NumericError("non-finite loss at iteration " + std::to_string(iteration));
  }
  backward(loss);
  adam_.step(store_, lr);
  return loss_value;
}

void Trainer::run(int64_t iterations, std::ostream* csv_log,
                  const std::function<void(int64_t)>& on_checkpoint) {
  const auto& tc = model_.config().training;
  if (csv_log) *csv_log << "iteration,loss,lr\n";
  for (int64_t it = 0; it < iterations; ++it) {
    const double loss = step(it);
    if (csv_log) {
      *csv_log << it << ',' << loss << ',' << tc.schedule.lr_at(it) << '\n';
      csv_log->flush();
    }
    if (on_checkpoint && tc.checkpoint_interval > 0 && (it + 1) % tc.checkpoint_interval == 0) {
      on_checkpoint(it + 1);
    }
  }
}

}  // namespace msaff
