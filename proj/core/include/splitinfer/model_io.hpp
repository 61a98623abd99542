// Copyright 2026 The splitinfer Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "splitinfer/model.hpp"

namespace splitinfer {

std::string encode_base64(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> decode_base64(const std::string& text);

/// Parses a model description. Throws ParseError for malformed JSON or missing fields,
/// StructuralError for shape-chain mismatches and UnsupportedOperatorError for unknown kinds.
Model parse_model(const nlohmann::json& doc);
Model read_model(const std::filesystem::path& path);

struct ModelWriteOptions {
    /// Tensors with more elements than this are written as base64 blocks instead of arrays.
    std::size_t inline_limit = 4096;
};

/// A tensor as an inline array, or a base64 block once it exceeds `inline_limit` elements.
nlohmann::json float_tensor_json(std::span<const float> values, const ModelWriteOptions& options = {});
nlohmann::json int8_tensor_json(std::span<const std::int8_t> values, const ModelWriteOptions& options = {});

nlohmann::json model_to_json(const Model& model, const ModelWriteOptions& options = {});
void write_model(const Model& model, const std::filesystem::path& path, const ModelWriteOptions& options = {});

/// Input tensors: a JSON array of numbers, or raw little-endian float32 for any other extension.
std::vector<float> read_tensor(const std::filesystem::path& path);
void write_tensor_json(std::span<const float> values, const std::filesystem::path& path);

/// Reads a whole file, throwing ParseError when it cannot be opened.
std::string read_text_file(const std::filesystem::path& path);
nlohmann::json read_json_file(const std::filesystem::path& path);
/// Writes `doc` with two-space indentation and a trailing newline.
void write_json_file(const nlohmann::json& doc, const std::filesystem::path& path);

}  // namespace splitinfer
