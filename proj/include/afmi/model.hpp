// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "afmi/kernels.hpp"
#include "afmi/tensor.hpp"

namespace afmi {

enum class LayerKind { conv2d, relu, maxpool, flatten, linear, gap };

std::string_view to_string(LayerKind kind) noexcept;
std::optional<LayerKind> parse_layer_kind(std::string_view name) noexcept;

struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    std::string name;
    std::string weight;  // conv2d, linear
    std::string bias;    // conv2d, linear
    ConvParams conv;
    std::size_t pool_kernel = 2;
    std::size_t pool_stride = 2;
    bool last_conv = false;

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Per-channel (x - mean) / std; a single entry broadcasts over channels, empty is identity.
struct Normalization {
    std::vector<float> mean;
    std::vector<float> stddev;

    float apply(float value, std::size_t channel) const noexcept;
    friend bool operator==(const Normalization&, const Normalization&) = default;
};

struct ModelSpec {
    Shape input_shape;
    std::size_t num_classes = 0;
    Normalization normalization;
    std::vector<LayerSpec> layers;

    friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

/// A validated, immutable layer graph plus weights.
///
/// The feature stack A is the output of the "last-conv" block: the tagged conv2d
/// followed by any ReLU/max-pool layers. Everything after it is the FC head and
/// may only contain flatten, gap, linear and relu, ending in the logit layer.
/// A model without conv layers uses its input as the feature stack.
class Model {
public:
    /// Validates shapes and weight references; throws FormatError.
    static Model create(ModelSpec spec, std::map<std::string, Tensor> weights);

    const ModelSpec& spec() const noexcept { return spec_; }
    const std::vector<LayerSpec>& layers() const noexcept { return spec_.layers; }
    const Shape& input_shape() const noexcept { return spec_.input_shape; }
    std::size_t num_classes() const noexcept { return spec_.num_classes; }
    const Normalization& normalization() const noexcept { return spec_.normalization; }

    const Tensor& weight(const std::string& name) const;
    const std::map<std::string, Tensor>& weights() const noexcept { return weights_; }

    const Shape& output_shape(std::size_t layer) const { return shapes_.at(layer); }
    const Shape& layer_input_shape(std::size_t layer) const {
        return layer == 0 ? spec_.input_shape : shapes_.at(layer - 1);
    }

    /// Layer whose output is the feature stack; nullopt when it is the input.
    std::optional<std::size_t> feature_layer() const noexcept { return feature_layer_; }
    std::size_t head_begin() const noexcept { return feature_layer_ ? *feature_layer_ + 1 : 0; }
    const Shape& feature_shape() const noexcept {
        return feature_layer_ ? shapes_[*feature_layer_] : spec_.input_shape;
    }

    /// Distinct for every create() call; traces carry it.
    std::uint64_t id() const noexcept { return id_; }

private:
    ModelSpec spec_;
    std::map<std::string, Tensor> weights_;
    std::vector<Shape> shapes_;
    std::optional<std::size_t> feature_layer_;
    std::uint64_t id_ = 0;
};

/// AFW1 container: "AFW1" | u32 version=1 | u64 json length | json | f32 LE payload.
Model load_model(std::span<const std::uint8_t> bytes);
Model load_model_file(const std::filesystem::path& path);
std::vector<std::uint8_t> save_model(const Model& model);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

/// Per-layer values of one forward pass. For layer l, pre_activation(l) is its
/// input y and activation(l) its output x.
struct ActivationTrace {
    std::uint64_t model_id = 0;
    Tensor input;
    std::vector<Tensor> outputs;
    std::vector<PoolIndex> pool_index;  // empty except for maxpool layers
    std::optional<std::size_t> feature_layer;

    const Tensor& pre_activation(std::size_t layer) const { return layer == 0 ? input : outputs.at(layer - 1); }
    const Tensor& activation(std::size_t layer) const { return outputs.at(layer); }
    const Tensor& feature_maps() const { return feature_layer ? outputs.at(*feature_layer) : input; }
    const Tensor& logits() const { return outputs.back(); }
};

ActivationTrace forward_with_trace(const Model& model, const Tensor& input);
Tensor forward(const Tensor& input, const Model& model);

/// Lowest index wins ties.
std::size_t argmax(std::span<const float> values) noexcept;

struct Prediction {
    std::size_t label = 0;
    Tensor probabilities;
};

Prediction predict(const Model& model, const Tensor& input);

enum class ReferenceKind { black, white, random };

struct Reference {
    ReferenceKind kind = ReferenceKind::black;
    std::uint64_t seed = 0;

    friend bool operator==(const Reference&, const Reference&) = default;
};

/// "black", "white" or "random:<seed>"; throws Error on anything else.
Reference parse_reference(std::string_view text);
std::string to_string(const Reference& reference);

/// Raw pixel value 0 (black), 1 (white) or seeded U[0,1), then normalized.
Tensor make_reference(const Reference& reference, const Shape& input_shape, const Normalization& normalization);

/// Uniform [0,1) doubles from a seeded mt19937_64; the 53-bit conversion is done
/// here rather than by std::uniform_real_distribution so streams match across
/// standard libraries.
class UniformStream {
public:
    explicit UniformStream(std::uint64_t seed);
    double next();

private:
    std::mt19937_64 engine_;
};

/// splitmix64 finalizer, for deriving per-item seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) noexcept;

}  // namespace afmi
