#pragma once

#include <cstdint>
#include <cstddef>
#include <string>
#include <vector>

#include "darkfield/nn.hpp"

namespace darkfield {

inline constexpr const char* kToolVersion = "0.1.0";

uint64_t fnv1a64(const void* data, size_t n, uint64_t seed = 0xcbf29ce484222325ULL);
uint64_t checksum_doubles(const std::vector<double>& v, uint64_t seed = 0xcbf29ce484222325ULL);
uint64_t checksum_params(const std::vector<ParamRef>& params);
std::string hex64(uint64_t v);

std::string now_iso8601();

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace darkfield
