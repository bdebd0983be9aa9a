#include <cmath>
#include <random>

#include "clarify/error.hpp"
#include "clarify/gateway/stubs.hpp"
#include "clarify/pruning/pruning.hpp"

namespace clarify::pruning {

namespace {

constexpr int kDim = static_cast<int>(ToyLayeredModel::kStateDim);

void check_spec(const LayerSpec& s, std::size_t index) {
    const auto where = "layer " + std::to_string(index + 1) + ": ";
    if (s.op == LayerOp::Swap || s.op == LayerOp::Rotate) {
        require(s.i >= 0 && s.i < kDim && s.j >= 0 && s.j < kDim && s.i != s.j,
                ErrorCode::InvalidArgument, where + "component indices must be distinct and < 8");
    }
    if (s.op == LayerOp::Rotate)
        require(std::isfinite(s.angle), ErrorCode::InvalidArgument, where + "angle must be finite");
    if (s.op == LayerOp::Scale)
        require(std::isfinite(s.factor) && s.factor > 0.0, ErrorCode::InvalidArgument,
                where + "scale factor must be positive");
}

void apply(const LayerSpec& s, std::vector<double>& v) {
    switch (s.op) {
        case LayerOp::Identity:
            break;
        case LayerOp::Negate:
            for (auto& x : v) x = -x;
            break;
        case LayerOp::Swap:
            std::swap(v[s.i], v[s.j]);
            break;
        case LayerOp::Rotate: {
            const double c = std::cos(s.angle);
            const double sn = std::sin(s.angle);
            const double a = v[s.i];
            const double b = v[s.j];
            v[s.i] = c * a - sn * b;
            v[s.j] = sn * a + c * b;
            break;
        }
        case LayerOp::Scale:
            for (auto& x : v) x *= s.factor;
            break;
    }
}

}  // namespace

ToyLayeredModel::ToyLayeredModel(std::vector<LayerSpec> layers, double params_total,
                                 double params_per_layer, std::string name)
    : layers_(std::move(layers)),
      params_total_(params_total),
      params_per_layer_(params_per_layer),
      name_(std::move(name)) {
    require(!layers_.empty(), ErrorCode::InvalidArgument, "toy model needs at least one layer");
    for (std::size_t i = 0; i < layers_.size(); ++i) check_spec(layers_[i], i);
    if (params_per_layer_ <= 0.0) params_per_layer_ = 1.0;
    if (params_total_ <= 0.0) params_total_ = params_per_layer_ * static_cast<double>(layers_.size());
}

std::vector<double> ToyLayeredModel::initial_state(const std::string& input) const {
    std::vector<double> v(kStateDim);
    for (std::size_t c = 0; c < kStateDim; ++c) {
        const auto h = gateway::stable_hash(input.data(), input.size(), 0x70 + c);
        const double mag = 0.5 + static_cast<double>(h >> 11) * 0x1.0p-53;
        v[c] = (h & 1u) ? -mag : mag;
    }
    return v;
}

std::vector<double> ToyLayeredModel::run(const std::string& input,
                                         const std::set<int>& skip_layers) const {
    auto v = initial_state(input);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        if (skip_layers.count(static_cast<int>(l) + 1)) continue;
        apply(layers_[l], v);
    }
    return v;
}

std::string ToyLayeredModel::render(const std::vector<double>& state) {
    std::string out;
    for (std::size_t c = 0; c < state.size(); ++c) {
        const long copies = std::min(64L, std::lround(std::fabs(state[c]) * 8.0));
        const std::string token = (state[c] < 0.0 ? "-f" : "f") + std::to_string(c);
        for (long k = 0; k < copies; ++k) {
            if (!out.empty()) out += ' ';
            out += token;
        }
    }
    return out;
}

std::string ToyLayeredModel::generate(const std::string& input,
                                      const std::set<int>& skip_layers) const {
    for (int l : skip_layers) {
        require(l >= 1 && l <= layer_count(), ErrorCode::InvalidArgument,
                "skip layer " + std::to_string(l) + " out of range");
    }
    return render(run(input, skip_layers));
}

ToyLayeredModel ToyLayeredModel::random(int layer_count, std::uint64_t seed) {
    require(layer_count >= 1, ErrorCode::InvalidArgument, "layer_count must be positive");
    std::mt19937_64 rng(seed);
    std::vector<LayerSpec> layers;
    layers.reserve(static_cast<std::size_t>(layer_count));
    for (int l = 0; l < layer_count; ++l) {
        const int i = static_cast<int>(rng() % kDim);
        const int j = static_cast<int>((i + 1 + rng() % (kDim - 1)) % kDim);
        switch (rng() % 4) {
            case 0: layers.push_back(LayerSpec::identity()); break;
            case 1: layers.push_back(LayerSpec::negate()); break;
            case 2: layers.push_back(LayerSpec::swap(i, j)); break;
            default: {
                const double angle = static_cast<double>(rng() >> 11) * 0x1.0p-53 * 6.283185307179586;
                layers.push_back(LayerSpec::rotate(i, j, angle));
            }
        }
    }
    return ToyLayeredModel(std::move(layers), 0.0, 0.0, "toy-random-" + std::to_string(seed));
}

}  // namespace clarify::pruning
