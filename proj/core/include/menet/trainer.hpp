#pragma once

#include <optional>
#include <ostream>

#include "menet/metrics.hpp"
#include "menet/model.hpp"

namespace menet {

struct AdamConfig {
    double lr = 5e-5;
    double beta1 = 0.9, beta2 = 0.999;
    double eps = 1e-8;
};

// Bias-corrected Adam over a ParamStore, in registration order.
class Adam {
  public:
    Adam(ParamStore& store, AdamConfig cfg);

    void step();  // consumes .grad; a missing grad buffer counts as zero
    long steps_taken() const { return t_; }

  private:
    ParamStore& store_;
    AdamConfig cfg_;
    std::vector<std::vector<double>> m_, v_;
    long t_ = 0;
};

struct StopTargets {
    double min_acc = -1;  // percent; negative disables the criterion
    double max_epe = -1;
    double max_nme = -1;

    bool enabled() const { return min_acc >= 0 || max_epe >= 0 || max_nme >= 0; }
};

struct TrainConfig {
    AdamConfig adam;
    LossWeights weights;
    int epochs = 50;
    int batch = 32;
    int workers = 1;
    std::uint64_t seed = 1;
    bool augment_train = true;
    int crop_hw = 128;
    double clip_norm = 10.0;  // global gradient-norm cap; <= 0 disables
    std::string log_path;        // append-only CSV: epoch,L_e,L_f,L_m,L
    StopTargets stop;            // checked on the training set when enabled
    int stop_check_every = 5;
};

struct EpochLog {
    int epoch;
    double ce, flow, landmark, total;
};

struct TrainResult {
    std::vector<EpochLog> epochs;
    std::optional<MetricReport> final_train_metrics;
    bool stopped_early = false;
};

// Loads every clip once, then runs mini-batch training. Gradients within a
// batch are accumulated in clip-index order regardless of worker count, so
// results are independent of `workers`.
TrainResult train(Model& model, const DatasetManifest& manifest,
                  const std::vector<int>& clip_indices, const TrainConfig& cfg,
                  std::ostream* progress = nullptr);

// Center-crop inference over the given clips; never mutates parameters.
MetricReport evaluate(const Model& model, const DatasetManifest& manifest,
                      const std::vector<int>& clip_indices, ConfusionCounts* counts = nullptr);

struct LosoFold {
    std::string held_out_subject;
    std::vector<int> train_clips, test_clips;
};

// One fold per distinct subject, subjects in sorted order.
std::vector<LosoFold> loso_split(const DatasetManifest& manifest);

// Full leave-one-subject-out run: a freshly initialized model per fold,
// confusion counts pooled across folds before computing metrics.
MetricReport loso_run(const DatasetManifest& manifest, const ModelConfig& model_cfg,
                      const TrainConfig& cfg, std::ostream* progress = nullptr);

// Versioned binary checkpoint of every parameter (name, shape, float64
// payload, little-endian), written atomically.
void save_checkpoint(const ParamStore& store, const std::string& path);
void load_checkpoint(ParamStore& store, const std::string& path);

}  // namespace menet
