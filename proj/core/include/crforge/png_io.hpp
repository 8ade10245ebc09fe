#ifndef CRFORGE_PNG_IO_HPP_
#define CRFORGE_PNG_IO_HPP_

#include <string>
#include <utility>

#include "crforge/frame.hpp"

namespace crforge {

// 8-bit RGB PNG in/out. Pixels map k <-> k/255.0; writing rounds to the
// nearest 8-bit level.
FrameImage read_png(const std::string& path);
void write_png(const std::string& path, const FrameImage& frame);

// Reads just the IHDR header: (height, width).
std::pair<int, int> png_dimensions(const std::string& path);

}  // namespace crforge

#endif  // CRFORGE_PNG_IO_HPP_
