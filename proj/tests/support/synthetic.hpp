#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "clarify/eval/eval.hpp"
#include "clarify/specialist/train.hpp"

namespace clarify::testing {

/// Linearly separable clusters: class c sits at `spread`·e_c with isotropic
/// noise of the given amplitude, so a margin of roughly spread − 2·noise·√d
/// separates any two classes.
inline specialist::LabeledEmbeddingSet separable_set(const std::vector<std::string>& classes, std::size_t dim,
                                                     std::size_t samples, std::uint64_t seed,
                                                     double spread = 4.0, double noise = 0.25) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-noise, noise);
    specialist::LabeledEmbeddingSet s;
    s.class_names = classes;
    for (std::size_t i = 0; i < samples; ++i) {
        const std::size_t c = i % classes.size();
        std::vector<double> v(dim);
        for (auto& x : v) x = u(rng);
        v[c % dim] += spread;
        s.embeddings.emplace_back(std::move(v));
        s.labels.push_back(c);
    }
    return s;
}

}  // namespace clarify::testing
