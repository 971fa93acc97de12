#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace msf {

// Writes to a sibling temp file and renames it over `path`, so readers never
// observe a partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

// Little-endian encoding helpers.
void put_u32(std::string& out, uint32_t v);
void put_i64(std::string& out, int64_t v);
void put_f32(std::string& out, float v);
uint32_t get_u32(const unsigned char* p);
int64_t get_i64(const unsigned char* p);
float get_f32(const unsigned char* p);

}  // namespace msf
