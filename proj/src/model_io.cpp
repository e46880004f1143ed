#include "splitkit/model_io.hpp"

#include <openssl/evp.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "splitkit/error.hpp"

namespace splitkit {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

std::string sha256_hex(const unsigned char* data, std::size_t len) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int digest_len = 0;
    if (EVP_Digest(data, len, digest, &digest_len, EVP_sha256(), nullptr) != 1) {
        throw LoadError("sha256 computation failed");
    }
    static const char* hexd = "0123456789abcdef";
    std::string out;
    out.reserve(digest_len * 2);
    for (unsigned int i = 0; i < digest_len; ++i) {
        out.push_back(hexd[digest[i] >> 4]);
        out.push_back(hexd[digest[i] & 0xF]);
    }
    return out;
}

std::vector<unsigned char> f64_to_le_bytes(const std::vector<double>& values) {
    std::vector<unsigned char> out(values.size() * 8);
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, &values[i], 8);
        for (int b = 0; b < 8; ++b) out[i * 8 + b] = static_cast<unsigned char>(bits >> (8 * b));
    }
    return out;
}

std::vector<double> le_bytes_to_f64(const unsigned char* bytes, std::size_t byte_count) {
    if (byte_count % 8 != 0) throw LoadError("blob byte count is not a multiple of 8");
    std::vector<double> out(byte_count / 8);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) {
            bits |= static_cast<std::uint64_t>(bytes[i * 8 + b]) << (8 * b);
        }
        std::memcpy(&out[i], &bits, 8);
    }
    return out;
}

namespace {

constexpr const char* kFormat = "splitkit-model";
constexpr int kVersion = 1;

struct BlobWriter {
    json tensor_table = json::array();
    std::vector<unsigned char> bytes;

    std::string put(const std::string& name, const Tensor& t) {
        json entry;
        entry["name"] = name;
        entry["shape"] = t.shape();
        entry["offset_bytes"] = bytes.size();
        entry["byte_count"] = t.buffer().size() * 8;
        tensor_table.push_back(entry);
        auto raw = f64_to_le_bytes(t.buffer());
        bytes.insert(bytes.end(), raw.begin(), raw.end());
        return name;
    }
};

struct BlobReader {
    json tensor_table;
    std::vector<unsigned char> bytes;

    Tensor get(const std::string& name) const {
        for (const auto& entry : tensor_table) {
            if (entry.at("name").get<std::string>() != name) continue;
            std::vector<std::int64_t> shape = entry.at("shape").get<std::vector<std::int64_t>>();
            const std::size_t off = entry.at("offset_bytes").get<std::size_t>();
            const std::size_t cnt = entry.at("byte_count").get<std::size_t>();
            if (off + cnt > bytes.size()) {
                throw LoadError("tensor '" + name + "' extends past end of blob");
            }
            std::vector<double> vals = le_bytes_to_f64(bytes.data() + off, cnt);
            if (static_cast<std::int64_t>(vals.size()) != shape_product(shape)) {
                throw LoadError("tensor '" + name + "' byte count disagrees with shape");
            }
            return Tensor(std::move(shape), std::move(vals));
        }
        throw LoadError("manifest references missing tensor '" + name + "'");
    }
};

json layer_to_json(const Layer& l, std::size_t idx, BlobWriter& blob) {
    const std::string p = "layers." + std::to_string(idx) + ".";
    json j;
    j["kind"] = layer_kind_name(l.kind);
    switch (l.kind) {
        case LayerKind::Linear:
            j["weight"] = blob.put(p + "weight", l.weight);
            break;
        case LayerKind::Conv2d:
            j["weight"] = blob.put(p + "weight", l.weight);
            j["stride"] = l.stride;
            j["padding"] = l.padding;
            break;
        case LayerKind::Bias:
            j["bias"] = blob.put(p + "bias", l.bias);
            break;
        case LayerKind::BatchNormEval:
            j["gamma"] = blob.put(p + "gamma", l.gamma);
            j["beta"] = blob.put(p + "beta", l.beta);
            j["mean"] = blob.put(p + "mean", l.mean);
            j["var"] = blob.put(p + "var", l.var);
            j["eps"] = l.eps;
            break;
        case LayerKind::MaxPool2d:
        case LayerKind::AvgPool2d:
            j["k"] = l.pool_k;
            j["stride"] = l.pool_stride;
            break;
        default:
            break;
    }
    return j;
}

Layer layer_from_json(const json& j, const BlobReader& blob) {
    const LayerKind kind = layer_kind_from_name(j.at("kind").get<std::string>());
    switch (kind) {
        case LayerKind::Linear:
            return Layer::linear(blob.get(j.at("weight").get<std::string>()));
        case LayerKind::Conv2d: {
            auto st = j.at("stride").get<std::array<std::int64_t, 2>>();
            auto pad = j.at("padding").get<std::array<std::int64_t, 2>>();
            return Layer::conv2d(blob.get(j.at("weight").get<std::string>()), st, pad);
        }
        case LayerKind::ReLU:
            return Layer::relu();
        case LayerKind::MaxoutRank2:
            return Layer::maxout_rank2();
        case LayerKind::MaxPool2d:
            return Layer::maxpool2d(j.at("k").get<std::int64_t>(), j.at("stride").get<std::int64_t>());
        case LayerKind::AvgPool2d:
            return Layer::avgpool2d(j.at("k").get<std::int64_t>(), j.at("stride").get<std::int64_t>());
        case LayerKind::BatchNormEval:
            return Layer::batchnorm_eval(blob.get(j.at("gamma").get<std::string>()), blob.get(j.at("beta").get<std::string>()),
                                         blob.get(j.at("mean").get<std::string>()), blob.get(j.at("var").get<std::string>()),
                                         j.at("eps").get<double>());
        case LayerKind::Bias:
            return Layer::bias_layer(blob.get(j.at("bias").get<std::string>()));
        case LayerKind::ResidualAddStart:
            return Layer::residual_start();
        case LayerKind::ResidualAddEnd:
            return Layer::residual_end();
        case LayerKind::Flatten:
            return Layer::flatten();
    }
    throw LoadError("unhandled layer kind");
}

json read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open manifest '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw LoadError("manifest '" + path + "' is not valid JSON: " + e.what());
    }
    if (j.value("format", "") != kFormat) {
        throw LoadError("manifest '" + path + "' has unknown format field");
    }
    if (j.value("version", -1) != kVersion) {
        throw LoadError("manifest '" + path + "' has unsupported version");
    }
    return j;
}

BlobReader read_blob(const json& manifest, const std::string& manifest_path) {
    const fs::path blob_path =
        fs::path(manifest_path).parent_path() / manifest.at("blob").get<std::string>();
    std::ifstream in(blob_path, std::ios::binary);
    if (!in) throw LoadError("cannot open blob '" + blob_path.string() + "'");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    const std::size_t expected = manifest.at("blob_bytes").get<std::size_t>();
    if (bytes.size() != expected) {
        throw LoadError("blob '" + blob_path.string() + "' truncated or padded: expected " +
                        std::to_string(expected) + " bytes, found " +
                        std::to_string(bytes.size()));
    }
    const std::string sum = sha256_hex(bytes.data(), bytes.size());
    if (sum != manifest.at("blob_sha256").get<std::string>()) {
        throw LoadError("blob '" + blob_path.string() + "' checksum mismatch");
    }
    BlobReader reader;
    reader.tensor_table = manifest.at("tensors");
    reader.bytes = std::move(bytes);
    return reader;
}

void write_files(json manifest, BlobWriter& blob, const std::string& manifest_path) {
    const fs::path mpath(manifest_path);
    fs::path blob_name = mpath.filename();
    blob_name.replace_extension(".bin");
    manifest["blob"] = blob_name.string();
    manifest["blob_bytes"] = blob.bytes.size();
    manifest["blob_sha256"] = sha256_hex(blob.bytes.data(), blob.bytes.size());
    manifest["tensors"] = std::move(blob.tensor_table);

    if (mpath.has_parent_path()) fs::create_directories(mpath.parent_path());
    std::ofstream bout(mpath.parent_path() / blob_name, std::ios::binary);
    if (!bout) throw LoadError("cannot write blob next to '" + manifest_path + "'");
    bout.write(reinterpret_cast<const char*>(blob.bytes.data()),
               static_cast<std::streamsize>(blob.bytes.size()));
    bout.close();

    std::ofstream mout(mpath);
    if (!mout) throw LoadError("cannot write manifest '" + manifest_path + "'");
    mout << manifest.dump(2) << "\n";
}

json manifest_header(const std::vector<std::int64_t>& input_shape, bool split) {
    json m;
    m["format"] = kFormat;
    m["version"] = kVersion;
    m["dtype"] = "float64-le";
    m["layout"] = "row-major";
    m["split"] = split;
    m["input_shape"] = input_shape;
    return m;
}

}  // namespace

bool manifest_is_split(const std::string& manifest_path) {
    return read_manifest(manifest_path).value("split", false);
}

void save_model(const Network& net, const std::string& manifest_path) {
    net.validate();
    json m = manifest_header(net.input_shape, false);
    BlobWriter blob;
    json layers = json::array();
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        layers.push_back(layer_to_json(net.layers[i], i, blob));
    }
    m["layers"] = std::move(layers);
    write_files(std::move(m), blob, manifest_path);
}

Network load_model(const std::string& manifest_path) {
    const json m = read_manifest(manifest_path);
    if (m.value("split", false)) {
        throw LoadError("'" + manifest_path + "' is a split model; use load_split_model");
    }
    const BlobReader blob = read_blob(m, manifest_path);
    Network net;
    net.input_shape = m.at("input_shape").get<std::vector<std::int64_t>>();
    for (const auto& lj : m.at("layers")) net.layers.push_back(layer_from_json(lj, blob));
    try {
        net.validate();
    } catch (const ShapeError& e) {
        throw LoadError("model '" + manifest_path + "' is inconsistent: " + e.what());
    }
    return net;
}

void save_split_model(const SplitNetwork& snet, const std::string& manifest_path) {
    json m = manifest_header(snet.input_shape, true);
    m["maxpool_mode"] = maxpool_mode_name(snet.maxpool_mode);
    BlobWriter blob;
    json layers = json::array();
    for (std::size_t i = 0; i < snet.layers.size(); ++i) {
        // Original tensors first so the source network is reconstructible,
        // then the +/- parts.
        json j = layer_to_json(snet.source.layers[i], i, blob);
        const SplitLayer& sl = snet.layers[i];
        const std::string p = "layers." + std::to_string(i) + ".";
        switch (sl.kind) {
            case LayerKind::Linear:
            case LayerKind::Conv2d:
                j["weight_pos"] = blob.put(p + "weight_pos", sl.weight_pos);
                j["weight_neg"] = blob.put(p + "weight_neg", sl.weight_neg);
                break;
            case LayerKind::Bias:
                j["bias_pos"] = blob.put(p + "bias_pos", sl.bias_pos);
                j["bias_neg"] = blob.put(p + "bias_neg", sl.bias_neg);
                break;
            case LayerKind::BatchNormEval:
                j["scale_pos"] = blob.put(p + "scale_pos", sl.scale_pos);
                j["scale_neg"] = blob.put(p + "scale_neg", sl.scale_neg);
                j["offset_pos"] = blob.put(p + "offset_pos", sl.offset_pos);
                j["offset_neg"] = blob.put(p + "offset_neg", sl.offset_neg);
                break;
            default:
                break;
        }
        layers.push_back(std::move(j));
    }
    m["layers"] = std::move(layers);
    write_files(std::move(m), blob, manifest_path);
}

SplitNetwork load_split_model(const std::string& manifest_path) {
    const json m = read_manifest(manifest_path);
    if (!m.value("split", false)) {
        throw LoadError("'" + manifest_path + "' is not a split model");
    }
    const BlobReader blob = read_blob(m, manifest_path);
    SplitNetwork sn;
    sn.input_shape = m.at("input_shape").get<std::vector<std::int64_t>>();
    const std::string mode = m.at("maxpool_mode").get<std::string>();
    if (mode == "convex") {
        sn.maxpool_mode = MaxPoolMode::Convex;
    } else if (mode == "wta") {
        sn.maxpool_mode = MaxPoolMode::Wta;
    } else {
        throw LoadError("unknown maxpool_mode '" + mode + "'");
    }
    sn.source.input_shape = sn.input_shape;
    for (const auto& lj : m.at("layers")) {
        Layer src = layer_from_json(lj, blob);
        SplitLayer sl;
        sl.kind = src.kind;
        sl.stride = src.stride;
        sl.padding = src.padding;
        sl.pool_k = src.pool_k;
        sl.pool_stride = src.pool_stride;
        switch (src.kind) {
            case LayerKind::Linear:
            case LayerKind::Conv2d:
                sl.weight_pos = blob.get(lj.at("weight_pos").get<std::string>());
                sl.weight_neg = blob.get(lj.at("weight_neg").get<std::string>());
                break;
            case LayerKind::Bias:
                sl.bias_pos = blob.get(lj.at("bias_pos").get<std::string>());
                sl.bias_neg = blob.get(lj.at("bias_neg").get<std::string>());
                break;
            case LayerKind::BatchNormEval:
                sl.scale_pos = blob.get(lj.at("scale_pos").get<std::string>());
                sl.scale_neg = blob.get(lj.at("scale_neg").get<std::string>());
                sl.offset_pos = blob.get(lj.at("offset_pos").get<std::string>());
                sl.offset_neg = blob.get(lj.at("offset_neg").get<std::string>());
                break;
            default:
                break;
        }
        sn.source.layers.push_back(std::move(src));
        sn.layers.push_back(std::move(sl));
    }
    try {
        sn.source.validate();
    } catch (const ShapeError& e) {
        throw LoadError("split model '" + manifest_path + "' is inconsistent: " + e.what());
    }
    return sn;
}

}  // namespace splitkit
