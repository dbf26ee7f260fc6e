#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "idan/data.hpp"
#include "idan/diffmap.hpp"
#include "idan/model.hpp"
#include "idan/tensor.hpp"

namespace idan::training {

// Bray-Curtis dissimilarity: sum|x-y| / (sum x + sum y + 1e-7).
template <typename S>
TensorT<S> bcd_loss(const TensorT<S>& pred, const TensorT<S>& label);

struct ConfusionCounts {
    std::int64_t tp = 0, tn = 0, fp = 0, fn = 0;
    std::int64_t total() const { return tp + tn + fp + fn; }
};

struct MetricsReport {
    double accuracy = 0, precision = 0, recall = 0, f1 = 0;
    ConfusionCounts counts;
    // set where a zero denominator forced the 0 convention
    bool accuracy_degenerate = false;
    bool precision_degenerate = false;
    bool recall_degenerate = false;
    bool f1_degenerate = false;
};

// pixel = 1 iff probability > threshold; input (N,1,H,W)
std::vector<BinaryMask> binarize(const Tensor& change_map, float threshold);

// label 1 = changed (positive class)
ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& label);
MetricsReport metrics(const ConfusionCounts& counts);

struct TrainConfig {
    int epochs = 15;
    int batch_size = 4;
    float learning_rate = 1e-3f;
    OptKind optimizer = OptKind::adam;
    std::uint64_t seed = 42;
    float threshold = 0.5f;  // binarization for validation metrics
    std::string checkpoint_path;

    void validate() const;
};

// Difference-map preparation settings shared by training, eval and the CLI.
struct PipelineConfig {
    diffmap::EdgeConfig edge;
    int kernel_side = 3;
    bool use_feature_file = false;
    std::string feature_file;
    std::uint64_t extractor_seed = 42;
    int feature_channels = 16;
};

// Owns the extractor and morphology kernel; prepare() is pure per sample.
class Pipeline {
public:
    explicit Pipeline(PipelineConfig cfg);

    // fd as rank-3 (c_p, H/8, W/8), ed as rank-3 (1, H, W) float {0,1}
    std::pair<Tensor, Tensor> prepare(const data::SamplePair& sample) const;

    const PipelineConfig& config() const { return cfg_; }
    int feature_channels() const { return extractor_->output_channels(); }
    const diffmap::FeatureExtractor& extractor() const { return *extractor_; }

private:
    PipelineConfig cfg_;
    std::unique_ptr<diffmap::FeatureExtractor> extractor_;
    StructuringElement kernel_;
};

struct EpochLog {
    int epoch = 0;
    double mean_loss = 0;
    double f1 = -1;  // < 0 when validation was not run
};

struct TrainResult {
    std::vector<EpochLog> log;
};

// Seeded shuffle, cached FD/ED maps, BCD loss, optimizer step per batch.
// Emits "epoch=<n> loss=<float> [f1=<float>]" lines to log_stream when given.
TrainResult train(model::IDANModel& m, const std::vector<data::SamplePair>& dataset,
                  const Pipeline& pipeline, const TrainConfig& cfg,
                  const std::vector<data::SamplePair>* validation = nullptr,
                  std::ostream* log_stream = nullptr);

// Confusion counts pooled over every pixel of every sample, metrics once.
MetricsReport evaluate(const model::IDANModel& m, const std::vector<data::SamplePair>& dataset,
                       const Pipeline& pipeline, float threshold);

// Checkpoint bundle: every named parameter as an IDTN entry plus a reserved
// "__meta__" entry carrying the model and pipeline settings.
void save_bundle(const std::string& path, const model::IDANModel& m, const PipelineConfig& pc);

struct Bundle {
    model::IDANModel model;
    PipelineConfig pipeline;
};

Bundle load_bundle(const std::string& path);

}  // namespace idan::training
