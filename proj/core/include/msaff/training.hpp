#pragma once

#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "msaff/config.hpp"
#include "msaff/datakit.hpp"
#include "msaff/model.hpp"
#include "msaff/params.hpp"
#include "msaff/tensor.hpp"

namespace msaff {

struct TripletBatch {
  Tensor embeddings;        // [B, P, out_c]
  std::vector<int> labels;  // B entries
};

// Batch-all triplet loss, computed per part and averaged over parts.
// reduction "nonzero_mean": mean of the strictly-positive hinge terms per
// part (parts with none contribute 0); "mean": plain mean over all terms.
Tensor ba_triplet_loss(const TripletBatch& batch, double margin,
                       const std::string& reduction = "nonzero_mean");

struct SequenceRef {
  int entry;        // dataset entry index
  int label;        // identity label
  int frame_count;
};

struct SampledSequence {
  int entry;
  std::vector<int> frames;  // sorted ascending
  int label;
};

// p distinct identities, k sequences each (with replacement when an identity
// has fewer), n_frames sorted frame indices per sequence.
std::vector<SampledSequence> sample_batch(const std::vector<SequenceRef>& sequences, int p,
                                          int k, int n_frames, std::mt19937_64& rng);

class Adam {
 public:
  explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  // Reads each parameter's accumulated gradient and writes the updated tensor
  // back into the store. Throws NumericError naming the parameter on a
  // non-finite gradient.
  void step(ParameterStore& store, double lr);

 private:
  struct State {
    std::vector<double> m, v;
  };
  std::map<std::string, State> state_;
  int64_t t_ = 0;
  double beta1_, beta2_, eps_;
};

// One optimizer step over a freshly sampled batch. Batch members run their
// forward passes concurrently; the update itself is a single writer.
class Trainer {
 public:
  Trainer(const MsaffModel& model, ParameterStore& store, const Dataset& dataset,
          uint64_t seed);

  // Returns the loss at this iteration (also logged via on_step).
  double step(int64_t iteration);

  // Runs [0, iterations) and writes "iteration,loss,lr" CSV rows.
  void run(int64_t iterations, std::ostream* csv_log,
           const std::function<void(int64_t)>& on_checkpoint = {});

 private:
  const MsaffModel& model_;
  ParameterStore& store_;
  const Dataset& dataset_;
  std::vector<SequenceRef> refs_;
  Adam adam_;
  std::mt19937_64 rng_;
};

}  // namespace msaff
