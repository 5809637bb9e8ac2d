#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "onfire/image.hpp"

namespace onfire {

// Decodes any format OpenCV reads into RGB floats in [0, 1]; nullopt when
// the file is missing or undecodable.
std::optional<Image> try_load_image(const std::filesystem::path& path);
Image load_image(const std::filesystem::path& path);  // throws FormatError
// 8-bit RGB (PNG, JPEG, ... by extension).
void save_image(const Image& image, const std::filesystem::path& path);
// 16-bit single-channel PNG of integer values (e.g. superpixel labels).
void save_label_image(const std::vector<int>& labels, int height, int width,
                      const std::filesystem::path& path);
std::vector<int> load_label_image(const std::filesystem::path& path, int* height, int* width);

bool is_image_file(const std::filesystem::path& path);
bool is_video_file(const std::filesystem::path& path);
// Image files directly inside dir, sorted by name.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

}  // namespace onfire
