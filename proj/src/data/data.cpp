#include "nsnp/data.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "nsnp/error.h"
#include "nsnp/io.h"

namespace nsnp::data {

namespace fs = std::filesystem;

// PPM / PGM --------------------------------------------------------------

namespace {

class HeaderReader {
public:
    HeaderReader(const std::vector<char>& b, const std::string& origin) : b_(b), origin_(origin) {}

    void skip_space() {
        while (pos_ < b_.size()) {
            if (b_[pos_] == '#') {
                while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
            } else if (std::isspace(static_cast<unsigned char>(b_[pos_]))) {
                ++pos_;
            } else {
                break;
            }
        }
    }
    std::size_t number(const char* what) {
        skip_space();
        std::size_t v = 0, digits = 0;
        while (pos_ < b_.size() && std::isdigit(static_cast<unsigned char>(b_[pos_]))) {
            v = v * 10 + static_cast<std::size_t>(b_[pos_] - '0');
            ++pos_;
            if (++digits > 9) throw ValidationError(origin_ + ": " + what + " is too large");
        }
        if (digits == 0) throw ValidationError(origin_ + ": expected " + what + " in header");
        return v;
    }
    // Exactly one whitespace byte separates the header from the raster.
    std::size_t raster_start() {
        if (pos_ >= b_.size() || !std::isspace(static_cast<unsigned char>(b_[pos_]))) {
            throw ValidationError(origin_ + ": missing whitespace after header");
        }
        return pos_ + 1;
    }
    std::size_t pos_ = 0;

private:
    const std::vector<char>& b_;
    const std::string& origin_;
};

}  // namespace

Image decode_ppm(const std::vector<char>& bytes, const std::string& origin) {
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') {
        throw ValidationError(origin + ": not a binary PPM (expected magic P6)");
    }
    HeaderReader h(bytes, origin);
    h.pos_ = 2;
    const std::size_t w = h.number("width"), ht = h.number("height"), maxval = h.number("maxval");
    if (w == 0 || ht == 0) throw ValidationError(origin + ": image has zero width or height");
    if (maxval != 255) throw ValidationError(origin + ": only maxval 255 is supported, got " + std::to_string(maxval));
    const std::size_t start = h.raster_start();
    const std::size_t need = w * ht * 3;
    if (bytes.size() - start < need) {
        throw ValidationError(origin + ": raster truncated (" + std::to_string(bytes.size() - start) + " of " +
                              std::to_string(need) + " bytes)");
    }
    Image img(w, ht);
    std::copy_n(reinterpret_cast<const std::uint8_t*>(bytes.data() + start), need, img.pixels.begin());
    return img;
}

std::vector<char> encode_ppm(const Image& image) {
    std::string header = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
    std::vector<char> out(header.begin(), header.end());
    out.insert(out.end(), image.pixels.begin(), image.pixels.end());
    return out;
}

Image read_ppm(const std::string& path) { return decode_ppm(read_file(path), path); }

std::vector<char> encode_pgm(const GrayImage& image) {
    std::string header = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
    std::vector<char> out(header.begin(), header.end());
    out.insert(out.end(), image.pixels.begin(), image.pixels.end());
    return out;
}

GrayImage map_to_gray(const Tensor& map) {
    if (map.rank() != 4 || map.dim(0) != 1 || map.dim(1) != 1) {
        throw ShapeError("attention map must be [1,1,H,W], got " + shape_str(map.shape()));
    }
    GrayImage g{map.dim(3), map.dim(2), {}};
    for (double v : map.values()) {
        g.pixels.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
    }
    return g;
}

// Augmentation -------------------------------------------------------------

namespace {

const std::map<std::string, AugmentKind>& kind_names() {
    static const std::map<std::string, AugmentKind> m{
        {"rot90", AugmentKind::rot90},     {"hflip", AugmentKind::hflip},
        {"vflip", AugmentKind::vflip},     {"hist_eq", AugmentKind::hist_eq},
        {"gamma", AugmentKind::gamma},     {"solarize", AugmentKind::solarize},
        {"autocontrast", AugmentKind::autocontrast}};
    return m;
}

double parse_number(const std::string& s, const std::string& context) {
    std::size_t used = 0;
    double v = 0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != s.size()) throw ValidationError(context + ": '" + s + "' is not a number");
    return v;
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0))); }

}  // namespace

AugmentOp AugmentOp::parse(const std::string& text) {
    const auto colon = text.find(':');
    const std::string name = text.substr(0, colon);
    const bool has_arg = colon != std::string::npos;
    const std::string arg = has_arg ? text.substr(colon + 1) : "";
    auto it = kind_names().find(name);
    if (it == kind_names().end()) {
        throw ValidationError("unknown augmentation '" + name +
                              "' (expected rot90, hflip, vflip, hist_eq, gamma, solarize, autocontrast)");
    }
    AugmentOp op;
    op.kind = it->second;
    const std::string ctx = "augmentation '" + text + "'";
    switch (op.kind) {
        case AugmentKind::rot90: {
            const double k = has_arg ? parse_number(arg, ctx) : 1.0;
            if (k != std::floor(k)) throw ValidationError(ctx + ": quarter turns must be an integer");
            op.quarter_turns = static_cast<int>(k);
            break;
        }
        case AugmentKind::gamma:
            if (!has_arg) throw ValidationError(ctx + ": gamma needs a value, e.g. gamma:0.8");
            op.gamma = parse_number(arg, ctx);
            if (!(op.gamma > 0.0)) throw ValidationError(ctx + ": gamma must be > 0");
            break;
        case AugmentKind::solarize: {
            const double t = has_arg ? parse_number(arg, ctx) : 128.0;
            if (t != std::floor(t) || t < 0 || t > 256) {
                throw ValidationError(ctx + ": threshold must be an integer in [0, 256]");
            }
            op.threshold = static_cast<int>(t);
            break;
        }
        default:
            if (has_arg) throw ValidationError(ctx + ": takes no argument");
    }
    return op;
}

std::string AugmentOp::describe() const {
    for (const auto& [name, k] : kind_names()) {
        if (k != kind) continue;
        if (kind == AugmentKind::rot90) return name + ":" + std::to_string(quarter_turns);
        if (kind == AugmentKind::solarize) return name + ":" + std::to_string(threshold);
        if (kind == AugmentKind::gamma) {
            std::ostringstream s;
            s << name << ":" << gamma;
            return s.str();
        }
        return name;
    }
    return "?";
}

AugmentChain parse_chain(const std::string& text) {
    AugmentChain chain;
    std::size_t start = 0;
    while (true) {
        const auto plus = text.find('+', start);
        chain.push_back(AugmentOp::parse(text.substr(start, plus - start)));
        if (plus == std::string::npos) break;
        start = plus + 1;
    }
    return chain;
}

namespace {

Image rotate_cw(const Image& in) {
    Image out(in.height, in.width);
    for (std::size_t r = 0; r < out.height; ++r) {
        for (std::size_t c = 0; c < out.width; ++c) {
            for (std::size_t ch = 0; ch < 3; ++ch) out.at(r, c, ch) = in.at(in.height - 1 - c, r, ch);
        }
    }
    return out;
}

template <class F>
Image per_channel_lut(const Image& in, F make_lut) {
    Image out = in;
    for (std::size_t ch = 0; ch < 3; ++ch) {
        std::array<std::size_t, 256> hist{};
        for (std::size_t i = ch; i < in.pixels.size(); i += 3) ++hist[in.pixels[i]];
        const std::array<std::uint8_t, 256> lut = make_lut(hist);
        for (std::size_t i = ch; i < out.pixels.size(); i += 3) out.pixels[i] = lut[in.pixels[i]];
    }
    return out;
}

std::array<std::uint8_t, 256> identity_lut() {
    std::array<std::uint8_t, 256> lut{};
    for (int v = 0; v < 256; ++v) lut[v] = static_cast<std::uint8_t>(v);
    return lut;
}

}  // namespace

Image augment(const Image& in, const AugmentOp& op) {
    switch (op.kind) {
        case AugmentKind::rot90: {
            Image out = in;
            const int k = ((op.quarter_turns % 4) + 4) % 4;
            for (int i = 0; i < k; ++i) out = rotate_cw(out);
            return out;
        }
        case AugmentKind::hflip: {
            Image out = in;
            for (std::size_t r = 0; r < in.height; ++r) {
                for (std::size_t c = 0; c < in.width; ++c) {
                    for (std::size_t ch = 0; ch < 3; ++ch) out.at(r, c, ch) = in.at(r, in.width - 1 - c, ch);
                }
            }
            return out;
        }
        case AugmentKind::vflip: {
            Image out = in;
            for (std::size_t r = 0; r < in.height; ++r) {
                std::copy_n(in.pixels.begin() + static_cast<std::ptrdiff_t>((in.height - 1 - r) * in.width * 3),
                            in.width * 3, out.pixels.begin() + static_cast<std::ptrdiff_t>(r * in.width * 3));
            }
            return out;
        }
        case AugmentKind::hist_eq:
            return per_channel_lut(in, [](const std::array<std::size_t, 256>& hist) {
                std::size_t total = 0, cdf_min = 0;
                for (std::size_t h : hist) {
                    if (cdf_min == 0) cdf_min = h;
                    total += h;
                }
                if (total == cdf_min) return identity_lut();  // single intensity
                std::array<std::uint8_t, 256> lut{};
                std::size_t cdf = 0;
                for (int v = 0; v < 256; ++v) {
                    cdf += hist[v];
                    const double scaled = static_cast<double>(cdf > cdf_min ? cdf - cdf_min : 0) /
                                          static_cast<double>(total - cdf_min) * 255.0;
                    lut[v] = to_byte(scaled);
                }
                return lut;
            });
        case AugmentKind::gamma: {
            if (!(op.gamma > 0.0)) throw ValidationError("gamma must be > 0");
            std::array<std::uint8_t, 256> lut{};
            for (int v = 0; v < 256; ++v) lut[v] = to_byte(std::pow(v / 255.0, op.gamma) * 255.0);
            Image out = in;
            for (auto& p : out.pixels) p = lut[p];
            return out;
        }
        case AugmentKind::solarize: {
            Image out = in;
            for (auto& p : out.pixels) {
                if (p >= op.threshold) p = static_cast<std::uint8_t>(255 - p);
            }
            return out;
        }
        case AugmentKind::autocontrast:
            return per_channel_lut(in, [](const std::array<std::size_t, 256>& hist) {
                int lo = 0, hi = 255;
                while (hist[lo] == 0) ++lo;
                while (hist[hi] == 0) --hi;
                if (lo == hi) return identity_lut();
                std::array<std::uint8_t, 256> lut{};
                for (int v = 0; v < 256; ++v) lut[v] = to_byte((v - lo) * 255.0 / (hi - lo));
                return lut;
            });
    }
    throw Error("unhandled augmentation kind");
}

Image augment(const Image& image, const AugmentChain& chain) {
    Image out = image;
    for (const auto& op : chain) out = augment(out, op);
    return out;
}

Tensor normalize(const Image& image) {
    const std::size_t hw = image.width * image.height;
    Tensor t({3, image.height, image.width});
    auto v = t.mutable_values();
    for (std::size_t p = 0; p < hw; ++p) {
        for (std::size_t ch = 0; ch < 3; ++ch) v[ch * hw + p] = image.pixels[p * 3 + ch] / 255.0;
    }
    return t;
}

Tensor resize_bilinear(const Tensor& in, std::size_t oh, std::size_t ow) {
    if (in.rank() != 3) throw ShapeError("resize_bilinear expects [C,H,W], got " + shape_str(in.shape()));
    if (oh == 0 || ow == 0) throw ShapeError("resize_bilinear: target size must be positive");
    const std::size_t c = in.dim(0), ih = in.dim(1), iw = in.dim(2);
    if (ih == oh && iw == ow) return in.detach().clone();
    // source coordinate and blend weight along one axis
    auto axis = [](std::size_t out_len, std::size_t in_len) {
        std::vector<std::pair<std::size_t, double>> m(out_len);
        const double scale = static_cast<double>(in_len) / static_cast<double>(out_len);
        for (std::size_t o = 0; o < out_len; ++o) {
            double s = (static_cast<double>(o) + 0.5) * scale - 0.5;
            s = std::clamp(s, 0.0, static_cast<double>(in_len - 1));
            const auto lo = std::min(static_cast<std::size_t>(s), in_len - 1);
            m[o] = {lo, s - static_cast<double>(lo)};
        }
        return m;
    };
    const auto ry = axis(oh, ih), rx = axis(ow, iw);
    Tensor out({c, oh, ow});
    auto o = out.mutable_values();
    const auto x = in.values();
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double* plane = x.data() + ch * ih * iw;
        for (std::size_t i = 0; i < oh; ++i) {
            const auto [y0, fy] = ry[i];
            const std::size_t y1 = std::min(y0 + 1, ih - 1);
            for (std::size_t j = 0; j < ow; ++j) {
                const auto [x0, fx] = rx[j];
                const std::size_t x1 = std::min(x0 + 1, iw - 1);
                const double top = plane[y0 * iw + x0] * (1 - fx) + plane[y0 * iw + x1] * fx;
                const double bot = plane[y1 * iw + x0] * (1 - fx) + plane[y1 * iw + x1] * fx;
                o[(ch * oh + i) * ow + j] = top * (1 - fy) + bot * fy;
            }
        }
    }
    return out;
}

// Labels and manifests -------------------------------------------------------

const std::vector<std::string>& binary_labels() {
    static const std::vector<std::string> v{"benign", "malignant"};
    return v;
}

const std::vector<std::string>& subtype_labels() {
    static const std::vector<std::string> v{"A", "F", "PT", "TA", "DC", "LC", "MC", "PC"};
    return v;
}

const std::vector<std::string>& magnifications() {
    static const std::vector<std::string> v{"40x", "100x", "200x", "400x", "synthetic"};
    return v;
}

const std::vector<std::string>& class_names(std::size_t task) {
    if (task == 2) return binary_labels();
    if (task == 8) return subtype_labels();
    throw ValidationError("task must be 2 or 8, got " + std::to_string(task));
}

namespace {

std::ptrdiff_t find_index(const std::vector<std::string>& v, const std::string& s) {
    auto it = std::find(v.begin(), v.end(), s);
    return it == v.end() ? -1 : it - v.begin();
}

bool known_label(const std::string& label) {
    return find_index(binary_labels(), label) >= 0 || find_index(subtype_labels(), label) >= 0;
}

}  // namespace

std::size_t class_index(const std::string& label, std::size_t task) {
    const auto sub = find_index(subtype_labels(), label);
    if (task == 8) {
        if (sub < 0) throw ValidationError("label '" + label + "' is not one of the 8 subtype labels");
        return static_cast<std::size_t>(sub);
    }
    if (task != 2) throw ValidationError("task must be 2 or 8, got " + std::to_string(task));
    if (sub >= 0) return sub < 4 ? 0 : 1;  // first four subtypes are benign
    const auto bin = find_index(binary_labels(), label);
    if (bin < 0) throw ValidationError("label '" + label + "' is not a known class");
    return static_cast<std::size_t>(bin);
}

Manifest parse_manifest(const std::string& text, const std::string& origin, const std::string& base_dir) {
    Manifest m;
    m.base_dir = base_dir;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    bool header_seen = false;
    std::set<std::string> paths;
    auto fail = [&](const std::string& msg) {
        throw ValidationError(origin + " line " + std::to_string(lineno) + ": " + msg);
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            const auto comma = line.find(',', start);
            fields.push_back(line.substr(start, comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (!header_seen) {
            if (line != "path,label,magnification,split") {
                fail("header must be 'path,label,magnification,split', got '" + line + "'");
            }
            header_seen = true;
            continue;
        }
        if (fields.size() != 4) {
            fail("expected 4 comma-separated fields, got " + std::to_string(fields.size()) +
                 " (paths containing commas are not supported)");
        }
        SampleRecord r{fields[0], fields[1], fields[2], fields[3]};
        if (r.path.empty()) fail("empty path");
        if (r.path.find('"') != std::string::npos) fail("quoted paths are not supported");
        if (!known_label(r.label)) {
            fail("unknown label '" + r.label + "' (expected benign, malignant, A, F, PT, TA, DC, LC, MC or PC)");
        }
        if (find_index(magnifications(), r.magnification) < 0) {
            fail("unknown magnification '" + r.magnification + "' (expected 40x, 100x, 200x, 400x or synthetic)");
        }
        if (!r.split.empty() && r.split != "train" && r.split != "val" && r.split != "test") {
            fail("unknown split '" + r.split + "' (expected train, val, test or empty)");
        }
        if (!paths.insert(r.path).second) fail("duplicate path '" + r.path + "'");
        m.records.push_back(std::move(r));
    }
    if (!header_seen) throw ValidationError(origin + ": empty manifest (no header)");
    return m;
}

Manifest load_manifest(const std::string& path) {
    const auto bytes = read_file(path);
    const fs::path parent = fs::path(path).parent_path();
    return parse_manifest(std::string(bytes.begin(), bytes.end()), path, parent.empty() ? "." : parent.string());
}

std::string format_manifest(const std::vector<SampleRecord>& records) {
    std::string out = "path,label,magnification,split\n";
    for (const auto& r : records) out += r.path + "," + r.label + "," + r.magnification + "," + r.split + "\n";
    return out;
}

void assign_splits(std::vector<SampleRecord>& records, std::size_t task, const SplitFractions& f,
                   std::uint64_t seed) {
    const double sum = f.train + f.val + f.test;
    if (f.train <= 0 || f.val < 0 || f.test < 0 || std::abs(sum - 1.0) > 1e-9) {
        throw ValidationError("split fractions must be non-negative, train > 0, and sum to 1");
    }
    std::vector<std::vector<std::size_t>> by_class(task);
    for (std::size_t i = 0; i < records.size(); ++i) by_class[class_index(records[i].label, task)].push_back(i);
    std::mt19937_64 rng(seed);
    for (auto& idx : by_class) {
        std::shuffle(idx.begin(), idx.end(), rng);
        const double n = static_cast<double>(idx.size());
        const std::size_t n_train = std::min(idx.size(), static_cast<std::size_t>(std::lround(n * f.train)));
        const std::size_t n_val =
            std::min(idx.size() - n_train, static_cast<std::size_t>(std::lround(n * f.val)));
        for (std::size_t k = 0; k < idx.size(); ++k) {
            records[idx[k]].split = k < n_train ? "train" : (k < n_train + n_val ? "val" : "test");
        }
    }
}

std::vector<SampleRecord> select_records(const Manifest& manifest, const DatasetOptions& o) {
    if (o.magnification != "all" && find_index(magnifications(), o.magnification) < 0) {
        throw ValidationError("unknown magnification filter '" + o.magnification + "'");
    }
    std::vector<SampleRecord> out;
    for (const auto& r : manifest.records) {
        if (o.magnification == "all" || r.magnification == o.magnification) out.push_back(r);
    }
    if (out.empty()) throw ValidationError("no manifest records match magnification '" + o.magnification + "'");
    for (const auto& r : out) class_index(r.label, o.task);
    // Blank splits are filled as a group so stratification sees every such record.
    std::vector<SampleRecord> blanks;
    std::vector<std::size_t> where;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (out[i].split.empty()) {
            blanks.push_back(out[i]);
            where.push_back(i);
        }
    }
    if (!blanks.empty()) {
        assign_splits(blanks, o.task, o.fractions, o.seed);
        for (std::size_t k = 0; k < where.size(); ++k) out[where[k]].split = blanks[k].split;
    }
    return out;
}

training::DataSplits build_dataset(const Manifest& manifest, const DatasetOptions& o) {
    if (o.size == 0) throw ValidationError("resize target must be >= 1");
    const auto records = select_records(manifest, o);
    std::vector<std::size_t> order(records.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 rng(o.seed ^ 0x5851f42d4c957f2dULL);
    std::shuffle(order.begin(), order.end(), rng);

    training::DataSplits d;
    auto to_tensor = [&](const Image& img) { return resize_bilinear(normalize(img), o.size, o.size); };
    for (std::size_t i : order) {
        const auto& r = records[i];
        const fs::path p = fs::path(r.path).is_absolute() ? fs::path(r.path) : fs::path(manifest.base_dir) / r.path;
        const Image img = read_ppm(p.string());
        const std::size_t label = class_index(r.label, o.task);
        training::Split& s = r.split == "train" ? d.train : (r.split == "val" ? d.val : d.test);
        s.images.push_back(to_tensor(img));
        s.labels.push_back(label);
        if (r.split != "train") continue;
        for (const auto& chain : o.augment) {
            s.images.push_back(to_tensor(augment(img, chain)));
            s.labels.push_back(label);
        }
    }
    return d;
}

// Synthetic data -----------------------------------------------------------

Image synthetic_image(std::size_t cls, std::size_t size, std::uint64_t seed) {
    // Per-class tint, blob count and stripe frequency.
    static const std::array<std::array<double, 3>, 8> tints{{{225, 150, 185},
                                                             {150, 95, 175},
                                                             {200, 120, 120},
                                                             {120, 160, 200},
                                                             {170, 200, 130},
                                                             {230, 200, 110},
                                                             {110, 110, 110},
                                                             {240, 240, 240}}};
    const auto& tint = tints[cls % tints.size()];
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, 12.0);
    const double s = static_cast<double>(size);
    const std::size_t blobs = 2 + 3 * cls;
    const double freq = 1.0 + 2.0 * static_cast<double>(cls);
    const double phase = unit(rng) * 6.283185307179586;
    struct Blob {
        double y, x, r;
    };
    std::vector<Blob> bs;
    for (std::size_t b = 0; b < blobs; ++b) bs.push_back({unit(rng) * s, unit(rng) * s, (0.04 + 0.05 * unit(rng)) * s});

    Image img(size, size);
    for (std::size_t r = 0; r < size; ++r) {
        for (std::size_t c = 0; c < size; ++c) {
            const double stripe = 18.0 * std::sin(6.283185307179586 * freq * static_cast<double>(r) / s + phase);
            double shade = 0.0;
            for (const auto& b : bs) {
                const double dy = static_cast<double>(r) - b.y, dx = static_cast<double>(c) - b.x;
                if (dy * dy + dx * dx <= b.r * b.r) shade = -70.0;
            }
            for (std::size_t ch = 0; ch < 3; ++ch) img.at(r, c, ch) = to_byte(tint[ch] + stripe + shade + noise(rng));
        }
    }
    return img;
}

std::vector<SampleRecord> make_synthetic(const SyntheticOptions& o, const std::string& dir) {
    if (o.classes != 2 && o.classes != 8) throw ValidationError("synthetic classes must be 2 or 8");
    if (o.per_class == 0) throw ValidationError("synthetic per_class must be >= 1");
    if (o.size == 0) throw ValidationError("synthetic size must be >= 1");
    fs::create_directories(dir);
    const auto& names = class_names(o.classes);
    std::vector<SampleRecord> records;
    std::size_t n = 0;
    for (std::size_t k = 0; k < o.per_class; ++k) {
        for (std::size_t c = 0; c < o.classes; ++c, ++n) {
            char name[32];
            std::snprintf(name, sizeof name, "img_%05zu.ppm", n);
            const Image img = synthetic_image(c, o.size, o.seed * 0x100000001b3ULL + n);
            write_file_atomic((fs::path(dir) / name).string(), encode_ppm(img));
            records.push_back({name, names[c], "synthetic", ""});
        }
    }
    assign_splits(records, o.classes, o.fractions, o.seed);
    write_file_atomic((fs::path(dir) / "manifest.csv").string(), format_manifest(records));
    return records;
}

}  // namespace nsnp::data
