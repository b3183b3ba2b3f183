#pragma once

#include <string>
#include <utility>
#include <vector>

#include "stacktrack/tensor.hpp"

namespace stacktrack {

// Binary P6 pixmap, maxval 255. Values are quantized to 1/255 steps on write.
void write_ppm(const std::string& path, const Tensor& image);
Tensor read_ppm(const std::string& path); // -> [3,H,W] in [0,1]

// Raw double-precision tensor dump ("STKT" header); see docs/formats.md.
void write_tensor_dump(const std::string& path, const Tensor& t);
Tensor read_tensor_dump(const std::string& path);

// Bilinear resize without aspect preservation.
Tensor resize_bilinear(const Tensor& image, int out_h, int out_w);

struct LoadedFrames {
    std::vector<Tensor> frames; // resized to [3,S,S], values in [0,1]
    int source_w = 0;
    int source_h = 0;
};

// Load a directory of numerically named .ppm / .tensor frames, in index
// order. The index run must be contiguous; a gap raises an error naming the
// missing index.
LoadedFrames load_frames(const std::string& dir, int image_size);

struct SeqInfo {
    std::string name;
    int width = 0;
    int height = 0;
    int length = 0;
};

SeqInfo read_seqinfo(const std::string& path);
void write_seqinfo(const std::string& path, const SeqInfo& info);

} // namespace stacktrack
