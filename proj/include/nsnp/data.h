#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "nsnp/tensor.h"
#include "nsnp/training.h"

namespace nsnp::data {

// 8-bit RGB, rows top to bottom, channels interleaved.
struct Image {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;

    Image() = default;
    Image(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), pixels(w * h * 3, fill) {}
    std::uint8_t& at(std::size_t r, std::size_t c, std::size_t ch) { return pixels[(r * width + c) * 3 + ch]; }
    std::uint8_t at(std::size_t r, std::size_t c, std::size_t ch) const { return pixels[(r * width + c) * 3 + ch]; }
    bool operator==(const Image&) const = default;
};

struct GrayImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;
};

// Binary PPM (P6, maxval 255) and PGM (P5).
Image decode_ppm(const std::vector<char>& bytes, const std::string& origin = "ppm");
std::vector<char> encode_ppm(const Image& image);
Image read_ppm(const std::string& path);
std::vector<char> encode_pgm(const GrayImage& image);
// Maps [N=1,1,H,W] values in [0,1] to 0..255 by rounding v * 255.
GrayImage map_to_gray(const Tensor& map);

enum class AugmentKind { rot90, hflip, vflip, hist_eq, gamma, solarize, autocontrast };

struct AugmentOp {
    AugmentKind kind = AugmentKind::hflip;
    int quarter_turns = 1;   // rot90, clockwise
    double gamma = 1.0;      // gamma
    int threshold = 128;     // solarize, 0..256

    // "rot90:2", "hflip", "gamma:0.8", "solarize:128", ...
    static AugmentOp parse(const std::string& text);
    std::string describe() const;
};

// Ops applied in sequence; one chain makes one augmented copy.
using AugmentChain = std::vector<AugmentOp>;
AugmentChain parse_chain(const std::string& text);  // "rot90:1+hist_eq"

Image augment(const Image& image, const AugmentOp& op);
Image augment(const Image& image, const AugmentChain& chain);

// v / 255 as a [3,H,W] tensor.
Tensor normalize(const Image& image);
// Bilinear with half-pixel centres (edges clamped); [C,H,W] -> [C,h,w].
Tensor resize_bilinear(const Tensor& chw, std::size_t out_h, std::size_t out_w);

// Label sets. Subtype order follows the benign group then the malignant one.
const std::vector<std::string>& binary_labels();   // benign, malignant
const std::vector<std::string>& subtype_labels();  // A, F, PT, TA, DC, LC, MC, PC
const std::vector<std::string>& magnifications();  // 40x, 100x, 200x, 400x, synthetic
const std::vector<std::string>& class_names(std::size_t task);
// Class index of a manifest label for a 2- or 8-class task.
std::size_t class_index(const std::string& label, std::size_t task);

struct SampleRecord {
    std::string path;  // as written in the manifest
    std::string label;
    std::string magnification;
    std::string split;  // train, val, test, or empty for automatic assignment
};

struct Manifest {
    std::string base_dir;  // paths resolve against this
    std::vector<SampleRecord> records;
};

Manifest parse_manifest(const std::string& text, const std::string& origin, const std::string& base_dir);
Manifest load_manifest(const std::string& path);
std::string format_manifest(const std::vector<SampleRecord>& records);

struct SplitFractions {
    double train = 0.70;
    double val = 0.15;
    double test = 0.15;
};

// Per class, in order of first appearance: shuffle, then the first
// round(n * train) go to train and the next round(n * val) to val.
void assign_splits(std::vector<SampleRecord>& records, std::size_t task, const SplitFractions& fractions,
                   std::uint64_t seed);

struct DatasetOptions {
    std::size_t task = 2;
    std::string magnification = "all";
    std::size_t size = 64;
    std::vector<AugmentChain> augment;  // applied to train samples only
    SplitFractions fractions;
    std::uint64_t seed = 0;
};

// Records after the magnification filter, with blank splits filled in.
std::vector<SampleRecord> select_records(const Manifest& manifest, const DatasetOptions& options);
training::DataSplits build_dataset(const Manifest& manifest, const DatasetOptions& options);

struct SyntheticOptions {
    std::size_t classes = 2;
    std::size_t per_class = 50;
    std::size_t size = 64;
    std::uint64_t seed = 0;
    SplitFractions fractions;
};

Image synthetic_image(std::size_t cls, std::size_t size, std::uint64_t seed);
// Writes img_<n>.ppm files and manifest.csv into dir; returns the records.
std::vector<SampleRecord> make_synthetic(const SyntheticOptions& options, const std::string& dir);

}  // namespace nsnp::data
