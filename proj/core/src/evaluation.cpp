#include "msaff/evaluation.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace msaff {
namespace {

// Relevance flags of one probe's admissible gallery entries, ranked by
// ascending distance with ties kept in gallery order.
std::vector<bool> ranked_relevance(const RetrievalProtocol& protocol, std::size_t probe_idx) {
  const GaitEmbedding& probe = protocol.probe[probe_idx];
  std::vector<std::pair<double, int>> order;  // (distance, gallery index)
  bool has_match = false;
  for (std::size_t g = 0; g < protocol.gallery.size(); ++g) {
    const GaitEmbedding& cand = protocol.gallery[g];
    if (protocol.admissible && !protocol.admissible(probe, cand)) continue;
    order.emplace_back(inference_distance(probe, cand), static_cast<int>(g));
    has_match = has_match || cand.subject == probe.subject;
  }
  if (order.empty() || !has_match) {
    throw DataError("protocol error: probe " + probe.subject + "/" + probe.condition + "/" +
                    probe.view + " (#" + std::to_string(probe_idx) +
                    ") has no admissible same-identity gallery entry");
  }
  std::stable_sort(order.begin(), order.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<bool> relevant;
  relevant.reserve(order.size());
  for (const auto& [_, g] : order) {
    relevant.push_back(protocol.gallery[static_cast<std::size_t>(g)].subject == probe.subject);
  }
  return relevant;
}

}  // namespace

double rank_k(const RetrievalProtocol& protocol, int k) {
  if (k < 1) throw UsageError("rank_k: k must be >= 1");
  if (protocol.probe.empty()) throw UsageError("rank_k: empty probe set");
  int hits = 0;
  for (std::size_t p = 0; p < protocol.probe.size(); ++p) {
    const auto relevant = ranked_relevance(protocol, p);
    const std::size_t top = std::min<std::size_t>(static_cast<std::size_t>(k), relevant.size());
    for (std::size_t i = 0; i < top; ++i) {
      if (relevant[i]) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(protocol.probe.size());
}

double mean_ap(const RetrievalProtocol& protocol) {
  if (protocol.probe.empty()) throw UsageError("mean_ap: empty probe set");
  double total = 0.0;
  for (std::size_t p = 0; p < protocol.probe.size(); ++p) {
    const auto relevant = ranked_relevance(protocol, p);
    double ap = 0.0;
    int seen = 0;
    for (std::size_t i = 0; i < relevant.size(); ++i) {
      if (relevant[i]) {
        ++seen;
        ap += static_cast<double>(seen) / static_cast<double>(i + 1);
      }
    }
    total += ap / seen;
  }
  return total / static_cast<double>(protocol.probe.size());
}

double mean_inp(const RetrievalProtocol& protocol) {
  if (protocol.probe.empty()) throw UsageError("mean_inp: empty probe set");
  double total = 0.0;
  for (std::size_t p = 0; p < protocol.probe.size(); ++p) {
    const auto relevant = ranked_relevance(protocol, p);
    int count = 0;
    std::size_t hardest = 0;
    for (std::size_t i = 0; i < relevant.size(); ++i) {
      if (relevant[i]) {
        ++count;
        hardest = i + 1;
      }
    }
    total += static_cast<double>(count) / static_cast<double>(hardest);
  }
  return total / static_cast<double>(protocol.probe.size());
}

double casia_rank_k_view_averaged(const std::vector<GaitEmbedding>& gallery,
                                  const std::vector<GaitEmbedding>& probe, int k) {
  std::set<std::string> gallery_views, probe_views;
  for (const auto& g : gallery) gallery_views.insert(g.view);
  for (const auto& p : probe) probe_views.insert(p.view);

  double total = 0.0;
  int cells = 0;
  for (const auto& pv : probe_views) {
    for (const auto& gv : gallery_views) {
      if (pv == gv) continue;  // identical-view cases excluded
      RetrievalProtocol cell;
      for (const auto& g : gallery) {
        if (g.view == gv) cell.gallery.push_back(g);
      }
      for (const auto& p : probe) {
        if (p.view == pv) cell.probe.push_back(p);
      }
      if (cell.probe.empty() || cell.gallery.empty()) continue;
      total += rank_k(cell, k);
      ++cells;
    }
  }
  if (cells == 0) {
    throw DataError("casia protocol: no cross-view (probe view, gallery view) pairs");
  }
  return total / cells;
}

RetrievalProtocol simple_protocol(std::vector<GaitEmbedding> embeddings) {
  std::map<std::string, int> seen;
  RetrievalProtocol protocol;
  for (auto& e : embeddings) {
    if (seen[e.subject]++ == 0) {
      protocol.probe.push_back(std::move(e));
    } else {
      protocol.gallery.push_back(std::move(e));
    }
  }
  return protocol;
}

}  // namespace msaff
