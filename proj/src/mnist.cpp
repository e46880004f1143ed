#include "splitkit/mnist.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "splitkit/error.hpp"
#include "splitkit/image_io.hpp"

namespace splitkit {

namespace {

std::uint32_t read_be_u32(std::ifstream& in, const std::string& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4) throw LoadError("'" + path + "' truncated while reading header");
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
           std::uint32_t(b[3]);
}

}  // namespace

std::vector<ImageSample> load_mnist_idx(const std::string& images_path,
                                        const std::string& labels_path, double mask_threshold) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw LoadError("cannot open image file '" + images_path + "'");
    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw LoadError("cannot open label file '" + labels_path + "'");

    const std::uint32_t img_magic = read_be_u32(img, images_path);
    if (img_magic != 0x00000803u) {
        throw LoadError("'" + images_path + "' has bad IDX image magic");
    }
    const std::uint32_t lab_magic = read_be_u32(lab, labels_path);
    if (lab_magic != 0x00000801u) {
        throw LoadError("'" + labels_path + "' has bad IDX label magic");
    }
    const std::uint32_t count = read_be_u32(img, images_path);
    const std::uint32_t rows = read_be_u32(img, images_path);
    const std::uint32_t cols = read_be_u32(img, images_path);
    const std::uint32_t label_count = read_be_u32(lab, labels_path);
    if (count != label_count) {
        throw LoadError("IDX pair mismatch: " + std::to_string(count) + " images vs " +
                        std::to_string(label_count) + " labels");
    }

    std::vector<unsigned char> pixels(static_cast<std::size_t>(rows) * cols);
    std::vector<ImageSample> out;
    out.reserve(count);
    for (std::uint32_t k = 0; k < count; ++k) {
        img.read(reinterpret_cast<char*>(pixels.data()),
                 static_cast<std::streamsize>(pixels.size()));
        if (img.gcount() != static_cast<std::streamsize>(pixels.size())) {
            throw LoadError("'" + images_path + "' truncated at image " + std::to_string(k));
        }
        int label = lab.get();
        if (label == EOF) throw LoadError("'" + labels_path + "' truncated at label " + std::to_string(k));
        ImageSample s;
        s.image = Tensor({1, static_cast<std::int64_t>(rows), static_cast<std::int64_t>(cols)});
        s.mask = Tensor({static_cast<std::int64_t>(rows), static_cast<std::int64_t>(cols)});
        for (std::int64_t i = 0; i < s.image.size(); ++i) {
            s.image[i] = static_cast<double>(pixels[static_cast<std::size_t>(i)]) / 255.0;
            s.mask[i] = s.image[i] > mask_threshold ? 1.0 : 0.0;
        }
        s.label = label;
        s.has_mask = true;
        out.push_back(std::move(s));
    }
    return out;
}

void attach_pgm_masks(std::vector<ImageSample>& dataset, const std::string& dir) {
    for (std::size_t k = 0; k < dataset.size(); ++k) {
        char name[32];
        std::snprintf(name, sizeof(name), "mask_%05zu.pgm", k);
        const std::string path = (std::filesystem::path(dir) / name).string();
        Tensor m = read_pgm(path);
        if (m.shape() != dataset[k].mask.shape()) {
            throw LoadError("mask '" + path + "' shape does not match image");
        }
        for (std::int64_t i = 0; i < m.size(); ++i) m[i] = m[i] > 0.5 ? 1.0 : 0.0;
        dataset[k].mask = std::move(m);
        dataset[k].has_mask = true;
    }
}

}  // namespace splitkit
