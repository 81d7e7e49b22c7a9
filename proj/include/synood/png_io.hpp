#pragma once

#include <string>

#include "synood/image.hpp"

namespace synood {

// Decodes a PNG to 8-bit RGB (gray and palette images are expanded, alpha is
// stripped). Throws IoError naming the file on any decode problem.
ImageU8 read_png(const std::string& path);

// Writes an 8-bit image (1 or 3 channels) as PNG.
void write_png(const std::string& path, const ImageU8& img);

}  // namespace synood
