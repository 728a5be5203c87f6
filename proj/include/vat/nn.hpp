#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "vat/rng.hpp"
#include "vat/tape.hpp"

namespace vat {

enum class Activation { none, relu, sigmoid };

enum class LayerKind { dense, conv_block, mlp_head, task_head };

struct LayerSpec {
    LayerKind kind;
    std::size_t fan_in;
    std::size_t fan_out;
    Activation act = Activation::none;
};

// Owns parameters; layers keep stable pointers into it.
class ParamStore {
public:
    Parameter& add(std::string id, Tensor value);
    const std::vector<Parameter*>& all() const { return ptrs_; }
    Parameter* find(std::string_view id) const;
    void zero_grads();
    std::size_t total_size() const;

    // Flat snapshot/restore of all parameter values, in registration order.
    std::vector<Tensor> snapshot() const;
    void restore(const std::vector<Tensor>& values);

private:
    std::vector<std::unique_ptr<Parameter>> own_;
    std::vector<Parameter*> ptrs_;
};

// Fan-scaled uniform init: He-style for relu layers, Glorot-style otherwise.
// Weight std comes out as sqrt(2/fan_in) resp. sqrt(2/(fan_in+fan_out)).
Tensor init_weight(const Shape& shape, std::size_t fan_in, std::size_t fan_out, Activation act, Rng& rng);

// ------------------------------------------------------------------ layers

struct DenseLayer {
    Parameter* w = nullptr;  // [in×out]
    Parameter* b = nullptr;  // [out]
    LayerSpec spec;

    static DenseLayer make(const std::string& name, const LayerSpec& spec, ParamStore& store, Rng& init);
    NodeId forward(Tape& t, NodeId x) const;  // affine + activation
};

// conv 3×3 'same' -> relu -> 2×2 max-pool
struct ConvBlock {
    Parameter* w = nullptr;  // [out_ch×in_ch×3×3]
    Parameter* b = nullptr;  // [out_ch]
    std::size_t in_ch = 0, out_ch = 0;

    static ConvBlock make(const std::string& name, std::size_t in_ch, std::size_t out_ch, ParamStore& store,
                          Rng& init);
    NodeId forward(Tape& t, NodeId x) const;
};

// ------------------------------------------------------------------ Adam

struct AdamConfig {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Standard Adam with bias correction. Moments are zero-initialized; t counts
// completed steps. Aborts with parameter id and step on non-finite gradients.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}
    void step(const std::vector<Parameter*>& params);
    std::size_t step_count() const { return t_; }
    const AdamConfig& config() const { return cfg_; }

private:
    struct Moments {
        Tensor m, v;
    };
    AdamConfig cfg_;
    std::vector<Moments> slots_;  // parallel to the params vector handed to step()
    std::size_t t_ = 0;
};

// ------------------------------------------------------------------ losses

// Mean binary cross-entropy; predictions clamped to [1e-7, 1-1e-7].
NodeId loss_bce(Tape& t, NodeId pred, const Tensor& target);

// Mean absolute error; subgradient 0 at ties.
NodeId loss_mae(Tape& t, NodeId pred, const Tensor& target);

// Smoothed Dice macro loss over classes 1..K-1 (class 0 is background and is
// excluded). pred [B×K×H×W] soft in (0,1), target one-hot of the same shape.
NodeId loss_dice_macro(Tape& t, NodeId pred, const Tensor& target_onehot, double smooth = 1.0);

// ------------------------------------------------------------------ model

enum class TaskKind { binary_classification, ordinal_regression };
enum class Aggregation { early, late };
enum class Method { baseline, vat_early, vat_late };

Aggregation method_aggregation(Method m);  // baseline maps to late (unused)
std::string method_name(Method m);
Method method_from_name(std::string_view name);

struct EncoderConfig {
    std::size_t in_channels = 1;
    std::size_t image_hw = 16;
    std::vector<std::size_t> channels = {8, 16, 32};
};

// Stack of conv blocks; forward returns every block output (post-pool).
class Encoder {
public:
    Encoder(const EncoderConfig& cfg, ParamStore& store, Rng& init);
    std::vector<NodeId> forward(Tape& t, NodeId x) const;
    const std::vector<ConvBlock>& blocks() const { return blocks_; }
    std::size_t embed_numel() const { return embed_numel_; }  // C_K·H_K·W_K
    // Length of the per-sample feature-stats vector for a given aggregation.
    std::size_t stats_len(Aggregation agg) const;

private:
    EncoderConfig cfg_;
    std::vector<ConvBlock> blocks_;
    std::size_t embed_numel_ = 0;
};

// flatten -> dense relu -> dense; sigmoid output for classification.
class TaskHead {
public:
    TaskHead(std::size_t in_numel, std::size_t hidden, TaskKind task, ParamStore& store, Rng& init);
    NodeId forward(Tape& t, NodeId embedding) const;  // [B×1]

private:
    DenseLayer h1_, h2_;
    std::size_t in_numel_;
};

// Pair discriminator: grl on each stats vector, concat, 2×64 relu MLP,
// sigmoid output P(same subset).
class Discriminator {
public:
    Discriminator(std::size_t stats_len, ParamStore& store, Rng& init, std::size_t hidden = 64);
    NodeId forward(Tape& t, NodeId stats_tr, NodeId stats_a) const;
    std::size_t stats_len() const { return stats_len_; }

private:
    DenseLayer h1_, h2_, out_;
    std::size_t stats_len_;
};

struct Model {
    ParamStore params;
    TaskKind task = TaskKind::binary_classification;
    Method method = Method::baseline;
    EncoderConfig encoder_cfg;
    std::unique_ptr<Encoder> encoder;
    std::unique_ptr<TaskHead> head;
    std::unique_ptr<Discriminator> disc;  // null for baseline

    // Init order is encoder, head, discriminator, all from one stream, so
    // baseline and VAT models share the encoder/head draws for a given seed.
    static Model build(TaskKind task, Method method, const EncoderConfig& cfg, std::size_t head_hidden,
                       Rng& init);

    Aggregation aggregation() const { return method_aggregation(method); }
    // Task prediction for a batch of images [B×C×H×W] -> [B] values.
    std::vector<double> predict(const Tensor& images) const;
    // Per-sample encoder statistics rows (early/all-blocks aggregation).
    std::vector<std::vector<double>> stats_rows(const Tensor& images) const;
};

}  // namespace vat
