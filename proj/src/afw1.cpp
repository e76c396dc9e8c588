// SPDX-License-Identifier: Apache-2.0
// AFW1 weight container.
#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <string_view>

#include <json.hpp>

#include "afmi/error.hpp"
#include "afmi/log.hpp"
#include "afmi/model.hpp"

namespace afmi {
namespace {

using nlohmann::json;

constexpr std::size_t header_size = 16;
constexpr std::uint32_t format_version = 1;
constexpr std::string_view magic = "AFW1";

template <typename T>
T read_le(const std::uint8_t* p) {
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(p[i]) << (8 * i);
    return v;
}

template <typename T>
void write_le(std::vector<std::uint8_t>& out, T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

ConvParams parse_conv(const json& j) {
    ConvParams p;
    auto pair = [&](const char* key, std::size_t& h, std::size_t& w) {
        if (!j.contains(key)) return;
        const auto& v = j.at(key);
        if (v.is_array()) {
            h = v.at(0).get<std::size_t>();
            w = v.at(1).get<std::size_t>();
        } else {
            h = w = v.get<std::size_t>();
        }
    };
    pair("stride", p.stride_h, p.stride_w);
    pair("padding", p.pad_h, p.pad_w);
    return p;
}

LayerSpec parse_layer(const json& j) {
    LayerSpec layer;
    const auto kind_name = j.at("kind").get<std::string>();
    const auto kind = parse_layer_kind(kind_name);
    if (!kind) throw FormatError(FormatErrc::invalid_spec, "unknown layer kind '" + kind_name + "'");
    layer.kind = *kind;
    layer.name = j.value("name", "");
    if (layer.kind == LayerKind::conv2d || layer.kind == LayerKind::linear) {
        layer.weight = j.at("weight").get<std::string>();
        layer.bias = j.at("bias").get<std::string>();
    }
    if (layer.kind == LayerKind::conv2d) layer.conv = parse_conv(j);
    if (layer.kind == LayerKind::maxpool) {
        layer.pool_kernel = j.at("kernel").get<std::size_t>();
        layer.pool_stride = j.value("stride", layer.pool_kernel);
    }
    if (j.contains("tag")) {
        const auto tag = j.at("tag").get<std::string>();
        if (tag != "last-conv") throw FormatError(FormatErrc::invalid_spec, "unknown layer tag '" + tag + "'");
        layer.last_conv = true;
    }
    return layer;
}

json layer_json(const LayerSpec& layer) {
    json j;
    j["kind"] = std::string(to_string(layer.kind));
    if (!layer.name.empty()) j["name"] = layer.name;
    if (layer.kind == LayerKind::conv2d || layer.kind == LayerKind::linear) {
        j["weight"] = layer.weight;
        j["bias"] = layer.bias;
    }
    if (layer.kind == LayerKind::conv2d) {
        j["stride"] = {layer.conv.stride_h, layer.conv.stride_w};
        j["padding"] = {layer.conv.pad_h, layer.conv.pad_w};
    }
    if (layer.kind == LayerKind::maxpool) {
        j["kernel"] = layer.pool_kernel;
        j["stride"] = layer.pool_stride;
    }
    if (layer.last_conv) j["tag"] = "last-conv";
    return j;
}

struct TensorEntry {
    std::string name;
    Shape shape;
    std::size_t offset;
};

}  // namespace

Model load_model(std::span<const std::uint8_t> bytes) {
    if (bytes.size() >= 4 && std::memcmp(bytes.data(), magic.data(), 4) != 0)
        throw FormatError(FormatErrc::bad_magic, "container does not start with \"AFW1\"");
    if (bytes.size() < header_size)
        throw FormatError(FormatErrc::truncated, "container shorter than the 16-byte header");
    const auto version = read_le<std::uint32_t>(bytes.data() + 4);
    if (version != format_version)
        throw FormatError(FormatErrc::version_mismatch, "container version " + std::to_string(version) +
                                                            ", expected " + std::to_string(format_version));
    const auto json_len = read_le<std::uint64_t>(bytes.data() + 8);
    if (json_len > bytes.size() - header_size)
        throw FormatError(FormatErrc::truncated, "JSON length " + std::to_string(json_len) + " exceeds container");
    const auto payload = bytes.subspan(header_size + json_len);

    ModelSpec spec;
    std::vector<TensorEntry> entries;
    try {
        const json j = json::parse(bytes.begin() + header_size, bytes.begin() + header_size + json_len);
        spec.input_shape = j.at("input_shape").get<Shape>();
        spec.num_classes = j.at("num_classes").get<std::size_t>();
        if (j.contains("normalization")) {
            spec.normalization.mean = j["normalization"].at("mean").get<std::vector<float>>();
            spec.normalization.stddev = j["normalization"].at("std").get<std::vector<float>>();
        }
        for (const auto& l : j.at("layers")) spec.layers.push_back(parse_layer(l));
        for (const auto& t : j.at("tensors"))
            entries.push_back({t.at("name").get<std::string>(), t.at("shape").get<Shape>(),
                               t.at("offset").get<std::size_t>()});
    } catch (const json::exception& e) {
        throw FormatError(FormatErrc::invalid_spec, e.what());
    }

    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.offset < b.offset; });
    std::map<std::string, Tensor> weights;
    std::size_t expected_offset = 0;
    for (const auto& e : entries) {
        if (e.shape.empty() || shape_size(e.shape) == 0)
            throw FormatError(FormatErrc::invalid_spec, "tensor '" + e.name + "' has an empty shape");
        if (e.offset != expected_offset)
            throw FormatError(FormatErrc::invalid_spec, "tensor '" + e.name + "' at offset " +
                                                            std::to_string(e.offset) + ", expected " +
                                                            std::to_string(expected_offset));
        const std::size_t count = shape_size(e.shape);
        if (e.offset + count * 4 > payload.size())
            throw FormatError(FormatErrc::truncated, "tensor '" + e.name + "' extends past the payload");
        std::vector<float> data(count);
        if constexpr (std::endian::native == std::endian::little) {
            std::memcpy(data.data(), payload.data() + e.offset, count * 4);
        } else {
            for (std::size_t i = 0; i < count; ++i)
                data[i] = std::bit_cast<float>(read_le<std::uint32_t>(payload.data() + e.offset + 4 * i));
        }
        if (!weights.emplace(e.name, Tensor(e.shape, std::move(data))).second)
            throw FormatError(FormatErrc::invalid_spec, "duplicate tensor '" + e.name + "'");
        expected_offset += count * 4;
    }
    if (expected_offset != payload.size())
        log::warn("AFW1 payload has " + std::to_string(payload.size() - expected_offset) + " trailing bytes");
    return Model::create(std::move(spec), std::move(weights));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Model load_model_file(const std::filesystem::path& path) { return load_model(read_file(path)); }

std::vector<std::uint8_t> save_model(const Model& model) {
    const ModelSpec& spec = model.spec();
    // layer reference order first, then anything unreferenced by name
    std::vector<std::string> order;
    std::set<std::string> seen;
    auto add = [&](const std::string& name) {
        if (!name.empty() && seen.insert(name).second) order.push_back(name);
    };
    for (const auto& layer : spec.layers) {
        add(layer.weight);
        add(layer.bias);
    }
    for (const auto& [name, _] : model.weights()) add(name);

    json j;
    j["input_shape"] = spec.input_shape;
    j["num_classes"] = spec.num_classes;
    if (!spec.normalization.mean.empty())
        j["normalization"] = {{"mean", spec.normalization.mean}, {"std", spec.normalization.stddev}};
    j["layers"] = json::array();
    for (const auto& layer : spec.layers) j["layers"].push_back(layer_json(layer));
    j["tensors"] = json::array();
    std::size_t offset = 0;
    for (const auto& name : order) {
        const Tensor& t = model.weight(name);
        j["tensors"].push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
        offset += t.size() * 4;
    }
    const std::string text = j.dump();

    std::vector<std::uint8_t> out(magic.begin(), magic.end());
    out.reserve(header_size + text.size() + offset);
    write_le<std::uint32_t>(out, format_version);
    write_le<std::uint64_t>(out, text.size());
    out.insert(out.end(), text.begin(), text.end());
    for (const auto& name : order)
        for (float v : model.weight(name).data()) write_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
    return out;
}

}  // namespace afmi
