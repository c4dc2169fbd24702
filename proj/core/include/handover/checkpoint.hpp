#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "handover/nn.hpp"

namespace handover {

// Binary container: 8-byte magic, u64 little-endian header length, a JSON
// header (model type, config echo, tensor table, training log CSV), then
// every tensor as row-major little-endian float32.
struct Checkpoint {
    std::string model_type;
    nlohmann::json config;
    std::string training_log_csv;
    std::vector<std::pair<std::string, nn::Matrix>> tensors;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(const std::filesystem::path& path);  // IoError, ParseError

Checkpoint make_checkpoint(std::string model_type, nlohmann::json config, const nn::ParameterStore& store,
                           std::string training_log_csv);
// Copies tensors into the store by name. Throws ConsistencyError when the
// set of names or any shape differs.
void restore_parameters(const Checkpoint& checkpoint, nn::ParameterStore& store);

}  // namespace handover
