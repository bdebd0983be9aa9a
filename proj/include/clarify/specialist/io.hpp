#pragma once

#include <cstdint>
#include <istream>
#include <string>
#include <vector>

#include "clarify/specialist/head.hpp"
#include "clarify/specialist/train.hpp"

namespace clarify::specialist {

// Head file layout (little-endian):
//   "CLFY" | u32 version | u32 header_len | header JSON
//   | f64 w1[hidden*d] | f64 b1[hidden] | f64 w2[k*hidden] | f64 b2[k]
// The header carries input_dim, hidden_dim, num_classes, activation and
// class_names.
inline constexpr std::uint32_t kHeadFormatVersion = 1;

std::vector<std::uint8_t> encode_head(const ClassifierHead& head);
/// Throws FormatError with the byte offset of the first inconsistency.
ClassifierHead decode_head(const std::vector<std::uint8_t>& bytes);

void save_head(const ClassifierHead& head, const std::string& path);
ClassifierHead load_head(const std::string& path);

/// Training data as JSON Lines: {"embedding": [...], "label": "class"} per
/// line. Blank lines are skipped. Class names are the sorted distinct labels
/// unless `class_names` is given, in which case unknown labels are an error.
LabeledEmbeddingSet read_training_jsonl(std::istream& in,
                                        const std::vector<std::string>& class_names = {});
LabeledEmbeddingSet load_training_jsonl(const std::string& path,
                                        const std::vector<std::string>& class_names = {});

}  // namespace clarify::specialist
