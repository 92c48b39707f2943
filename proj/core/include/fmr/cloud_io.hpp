#pragma once

#include <filesystem>
#include <functional>
#include <string>

#include "fmr/cloud.hpp"

namespace fmr {

enum class CloudFormat { Xyz, Ply, Off };

/// Picks the format from the file extension (.xyz/.ply/.off, case-insensitive).
CloudFormat format_from_path(const std::filesystem::path& path);

PointCloud load_cloud(const std::filesystem::path& path, CloudFormat format);
PointCloud load_cloud(const std::filesystem::path& path);

/// Writes with 9 significant digits, LF line endings, via a temp file and an
/// atomic rename so failures never leave partial output behind.
void save_cloud(const PointCloud& cloud, const std::filesystem::path& path,
                CloudFormat format);
void save_cloud(const PointCloud& cloud, const std::filesystem::path& path);

/// Renders content with `write` into a sibling temp file, then renames it
/// over `path`. Used by every file producer in the project.
void atomic_write(const std::filesystem::path& path,
                  const std::function<void(std::ostream&)>& write);

}  // namespace fmr
