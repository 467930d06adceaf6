#pragma once

#include <functional>
#include <string>
#include <vector>

#include "msaff/model.hpp"

namespace msaff {

// Gallery/probe retrieval instance. `admissible` filters (probe, gallery)
// pairs; when empty every pair is admissible. Distances come from
// inference_distance; ties break on the (stable) gallery index.
struct RetrievalProtocol {
  std::vector<GaitEmbedding> gallery;
  std::vector<GaitEmbedding> probe;
  std::function<bool(const GaitEmbedding& probe, const GaitEmbedding& gallery)> admissible;
};

// Fraction of probes whose top-k admissible neighbors contain the probe's
// identity. Throws DataError naming the probe when it has no admissible
// same-identity gallery entry.
double rank_k(const RetrievalProtocol& protocol, int k);

// Mean average precision over the admissible ranking.
double mean_ap(const RetrievalProtocol& protocol);

// Mean inverse negative penalty: relevant count over the rank of the
// hardest relevant entry.
double mean_inp(const RetrievalProtocol& protocol);

// CASIA-B convention: accuracy per (probe view, gallery view) pair with
// identical views excluded, averaged over pairs that contain probes.
double casia_rank_k_view_averaged(const std::vector<GaitEmbedding>& gallery,
                                  const std::vector<GaitEmbedding>& probe, int k);

// Simple split: per test subject the first entry is the probe, the rest
// gallery.
RetrievalProtocol simple_protocol(std::vector<GaitEmbedding> embeddings);

}  // namespace msaff
