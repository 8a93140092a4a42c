#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gnio/imu/types.hpp"

namespace gnio::imu {

/// Shortest decimal form that parses back to the same double.
std::string format_double(double v);

std::vector<ImuSample> read_imu_csv(const std::filesystem::path& path);
void write_imu_csv(const std::filesystem::path& path, std::span<const ImuSample> samples);

std::vector<PoseSample> read_pose_csv(const std::filesystem::path& path);
void write_pose_csv(const std::filesystem::path& path, std::span<const PoseSample> poses);

/// Directory layout: imu.csv, gt.csv (optional), meta.json with rate and bias.
void save_sequence(const std::filesystem::path& dir, const Sequence& seq);
Sequence load_sequence(const std::filesystem::path& dir);

}  // namespace gnio::imu
