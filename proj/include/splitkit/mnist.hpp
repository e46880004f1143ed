#ifndef SPLITKIT_MNIST_HPP
#define SPLITKIT_MNIST_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "splitkit/tensor.hpp"

namespace splitkit {

struct ImageSample {
    Tensor image;              // C x H x W, values in [0, 1]
    std::int64_t label = -1;
    bool has_mask = false;
    Tensor mask;               // H x W, entries in {0, 1}
};

// Reads the big-endian IDX pair (magic 0x803 images / 0x801 labels),
// scales pixels to [0,1] and synthesizes a stroke mask (pixel > threshold)
// unless real masks are attached afterwards.
std::vector<ImageSample> load_mnist_idx(const std::string& images_path,
                                        const std::string& labels_path,
                                        double mask_threshold = 0.35);

// Replaces the synthesized masks with binary PGM files named
// mask_00000.pgm, mask_00001.pgm, ... under `dir` (entries > 0.5 count
// as inside).
void attach_pgm_masks(std::vector<ImageSample>& dataset, const std::string& dir);

}  // namespace splitkit

#endif
