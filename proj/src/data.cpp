#include "darkfield/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "darkfield/rng.hpp"
#include "darkfield/util.hpp"

namespace fs = std::filesystem;

namespace darkfield {

std::string split_name(Split s) {
    switch (s) {
        case Split::kTrain: return "train";
        case Split::kVal: return "val";
        case Split::kTest: return "test";
        case Split::kOod: return "ood";
    }
    throw std::logic_error("unknown split");
}

namespace {

Split split_from_name(const std::string& name) {
    if (name == "train") return Split::kTrain;
    if (name == "val") return Split::kVal;
    if (name == "test") return Split::kTest;
    if (name == "ood") return Split::kOod;
    throw std::runtime_error("unknown split name: " + name);
}

}  // namespace

void validate(const PhantomConfig& cfg) {
    if (cfg.height < 32 || cfg.width < 32) {
        throw std::invalid_argument("phantom size must be at least 32x32");
    }
    if (cfg.count < 1) throw std::invalid_argument("phantom count must be >= 1");
    if (!(cfg.sigma_lo > 0.0) || cfg.sigma_hi < cfg.sigma_lo) {
        throw std::invalid_argument("phantom noise range needs 0 < sigma_lo <= sigma_hi");
    }
    if (cfg.confounder_prob < 0.0 || cfg.confounder_prob > 1.0) {
        throw std::invalid_argument("confounder_prob must lie in [0,1]");
    }
    if (cfg.texture_cells < 1) throw std::invalid_argument("texture_cells must be >= 1");
}

namespace {

// Tilted ellipse in normalized [0,1]^2 coordinates. q() < 1 inside.
struct Ellipse {
    double cx, cy, rx, ry, ct, st;

    Ellipse(double cx_, double cy_, double rx_, double ry_, double tilt)
        : cx(cx_), cy(cy_), rx(rx_), ry(ry_), ct(std::cos(tilt)), st(std::sin(tilt)) {}

    double q(double x, double y) const {
        const double dx = x - cx, dy = y - cy;
        const double u = (dx * ct + dy * st) / rx;
        const double v = (-dx * st + dy * ct) / ry;
        return u * u + v * v;
    }
};

// Smoothly interpolated lattice noise in [0,1].
struct ValueNoise {
    int cells;
    std::vector<double> grid;  // (cells+1)^2, row-major

    ValueNoise(int cells_, Rng& rng) : cells(cells_), grid((cells_ + 1) * (cells_ + 1)) {
        for (auto& g : grid) g = rng.uniform();
    }

    double at(double x, double y) const {
        const double gx = std::clamp(x, 0.0, 1.0) * cells;
        const double gy = std::clamp(y, 0.0, 1.0) * cells;
        const int i = std::min(cells - 1, static_cast<int>(gx));
        const int j = std::min(cells - 1, static_cast<int>(gy));
        double fx = gx - i, fy = gy - j;
        fx = fx * fx * (3.0 - 2.0 * fx);
        fy = fy * fy * (3.0 - 2.0 * fy);
        const int n = cells + 1;
        const double g00 = grid[j * n + i], g01 = grid[j * n + i + 1];
        const double g10 = grid[(j + 1) * n + i], g11 = grid[(j + 1) * n + i + 1];
        return (g00 * (1 - fx) + g01 * fx) * (1 - fy) + (g10 * (1 - fx) + g11 * fx) * fy;
    }
};

struct Rib {
    double y0, amp, width, curve;
};

std::string phantom_id(int index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "p%05d", index);
    return buf;
}

}  // namespace

PhantomDetail generate_phantom_detail(const PhantomConfig& cfg, int index) {
    validate(cfg);
    if (index < 0) throw std::invalid_argument("phantom index must be >= 0");
    Rng rng(mix_seed(cfg.seed, static_cast<uint64_t>(index), 0x9e77ULL));

    // All random scalars are drawn up front in a fixed order, so the pixel
    // loops below are pure arithmetic and the sample is reproducible.
    const Ellipse lung_l(rng.uniform(0.28, 0.34), rng.uniform(0.42, 0.50), rng.uniform(0.13, 0.17),
                         rng.uniform(0.24, 0.30), rng.uniform(-0.15, 0.15));
    const Ellipse lung_r(rng.uniform(0.66, 0.72), rng.uniform(0.42, 0.50), rng.uniform(0.13, 0.17),
                         rng.uniform(0.24, 0.30), rng.uniform(-0.15, 0.15));
    const Ellipse heart(rng.uniform(0.47, 0.53), rng.uniform(0.62, 0.68), rng.uniform(0.14, 0.18),
                        rng.uniform(0.13, 0.17), 0.0);

    const int n_ribs = rng.uniform_int(4, 6);
    std::vector<Rib> ribs;
    const double spacing = 0.52 / n_ribs;
    for (int k = 0; k < n_ribs; ++k) {
        Rib rib;
        rib.y0 = 0.20 + (k + 0.5) * spacing + rng.uniform(-0.01, 0.01);
        rib.amp = rng.uniform(0.05, 0.09);
        rib.width = rng.uniform(0.012, 0.020);
        rib.curve = rng.uniform(0.05, 0.12);
        ribs.push_back(rib);
    }

    const bool has_confounder = rng.bernoulli(cfg.confounder_prob);
    bool conf_is_disc = false;
    double conf_a = 0, conf_b = 0, conf_c = 0, conf_d = 0;
    if (has_confounder) {
        conf_is_disc = rng.bernoulli(0.5);
        if (conf_is_disc) {
            conf_a = rng.uniform(0.30, 0.70);  // center x
            conf_b = rng.uniform(0.35, 0.75);  // center y
            conf_c = rng.uniform(0.03, 0.05);  // radius
        } else {
            conf_a = rng.uniform(0.20, 0.80);  // cable anchor y
            conf_b = rng.uniform(-0.30, 0.30);  // slope
            conf_c = rng.uniform(0.0, 6.283185307179586);  // wiggle phase
        }
        conf_d = rng.uniform(0.18, 0.26);  // brightness
    }

    const double beta = rng.uniform(1.5, 3.0);

    double stripe_period = 0, stripe_phase = 0, stripe_amp = 0;
    if (cfg.stripes) {
        stripe_period = rng.uniform(6.0, 10.0);
        stripe_phase = rng.uniform(0.0, 6.283185307179586);
        stripe_amp = rng.uniform(0.03, 0.05);
    }

    const ValueNoise tex_coarse(cfg.texture_cells, rng);
    const ValueNoise tex_fine(2 * cfg.texture_cells, rng);

    const int H = cfg.height, W = cfg.width;
    PhantomDetail d;
    d.attenuation = Image2D(H, W);
    d.darkfield_clean = Image2D(H, W);
    d.sigma = Image2D(H, W);
    d.lung_mask = Image2D(H, W);
    d.beta = beta;
    // scale such that the draw's effective std equals the injected sigma
    const double alpha_per_sigma = std::exp(0.5 * (std::lgamma(1.0 / beta) - std::lgamma(3.0 / beta)));

    Image2D alpha(H, W), beta_map(H, W, beta);
    for (int r = 0; r < H; ++r) {
        const double y = (r + 0.5) / H;
        for (int c = 0; c < W; ++c) {
            const double x = (c + 0.5) / W;

            const double ql = lung_l.q(x, y), qr = lung_r.q(x, y);
            const double lung = std::max(0.0, 1.0 - std::min(ql, qr));
            const bool in_lung = ql <= 1.0 || qr <= 1.0;

            const double tex = 0.65 * tex_coarse.at(x, y) + 0.35 * tex_fine.at(x, y);

            double att = 0.74 + 0.06 * (y - 0.5);
            att -= 0.42 * lung * (0.50 + 0.50 * tex);
            att += 0.16 * std::max(0.0, 1.0 - heart.q(x, y));
            const double torso = std::exp(-std::pow((x - 0.5) / 0.38, 4.0));
            for (const auto& rib : ribs) {
                const double dy = y - (rib.y0 + rib.curve * (x - 0.5) * (x - 0.5));
                att += torso * rib.amp * std::exp(-(dy * dy) / (rib.width * rib.width));
            }
            if (has_confounder) {
                if (conf_is_disc) {
                    const double dx = x - conf_a, dy = y - conf_b;
                    const double q = (dx * dx + dy * dy) / (conf_c * conf_c);
                    att += conf_d * std::max(0.0, 1.0 - q);
                } else {
                    const double dy =
                        y - (conf_a + conf_b * (x - 0.5) + 0.05 * std::sin(9.0 * x + conf_c));
                    att += conf_d * std::exp(-(dy * dy) / (0.008 * 0.008));
                }
            }
            d.attenuation.at(r, c) = std::clamp(att, 0.02, 0.98);

            d.darkfield_clean.at(r, c) = 0.03 + 0.72 * lung * (0.45 + 0.55 * tex);
            const double sigma = cfg.sigma_lo + (cfg.sigma_hi - cfg.sigma_lo) * lung * tex;
            d.sigma.at(r, c) = sigma;
            alpha.at(r, c) = sigma * alpha_per_sigma;
            d.lung_mask.at(r, c) = in_lung ? 1.0 : 0.0;
        }
    }

    d.noise_params = GgdParams{alpha, beta_map};
    d.noise_seed = mix_seed(cfg.seed, static_cast<uint64_t>(index), 0xd01eULL);
    const Image2D noise = ggd_sample(H, W, d.noise_params, d.noise_seed);
    d.darkfield = Image2D(H, W);
    for (int r = 0; r < H; ++r) {
        const double stripe =
            cfg.stripes ? stripe_amp * std::sin(6.283185307179586 * r / stripe_period + stripe_phase)
                        : 0.0;
        for (int c = 0; c < W; ++c) {
            d.darkfield.at(r, c) =
                std::clamp(d.darkfield_clean.at(r, c) + stripe + noise.at(r, c), 0.0, 1.0);
        }
    }
    return d;
}

PairedSample generate_phantom_pair(const PhantomConfig& cfg, int index) {
    PhantomDetail d = generate_phantom_detail(cfg, index);
    PairedSample s;
    s.id = phantom_id(index);
    s.attenuation = std::move(d.attenuation);
    s.darkfield = std::move(d.darkfield);
    s.truth_noise_sigma = std::move(d.sigma);
    s.split = Split::kTrain;
    return s;
}

// ---------------------------------------------------------------------------
// file formats

void write_pgm16(const std::string& path, const Image2D& img, RangeMap range) {
    if (img.height < 1 || img.width < 1) throw std::invalid_argument("write_pgm16: empty image");
    if (!(range.hi > range.lo)) throw std::invalid_argument("write_pgm16: range.hi must exceed lo");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "P5\n" << img.width << " " << img.height << "\n65535\n";
    std::vector<unsigned char> buf(img.size() * 2);
    const double scale = 65535.0 / (range.hi - range.lo);
    for (size_t i = 0; i < img.size(); ++i) {
        const double t = std::clamp((img.data[i] - range.lo) * scale, 0.0, 65535.0);
        const auto v = static_cast<uint16_t>(std::lround(t));
        buf[2 * i] = static_cast<unsigned char>(v >> 8);  // big-endian per format
        buf[2 * i + 1] = static_cast<unsigned char>(v & 0xff);
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw std::runtime_error("write failed: " + path);

    nlohmann::json sidecar{{"lo", range.lo}, {"hi", range.hi}};
    write_text_file(path + ".json", sidecar.dump() + "\n");
}

namespace {

// Reads the next PGM header token, skipping whitespace and # comments.
std::string next_pgm_token(std::istream& in, const std::string& path) {
    int ch = in.get();
    while (ch != EOF && (std::isspace(ch) || ch == '#')) {
        if (ch == '#') {
            while (ch != EOF && ch != '\n') ch = in.get();
        }
        ch = in.get();
    }
    if (ch == EOF) throw std::runtime_error("truncated header: " + path);
    std::string tok;
    while (ch != EOF && !std::isspace(ch)) {
        tok.push_back(static_cast<char>(ch));
        ch = in.get();
    }
    return tok;
}

}  // namespace

Image2D read_pgm16(const std::string& path, RangeMap* range_out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    if (next_pgm_token(in, path) != "P5") {
        throw std::runtime_error("not a binary grayscale (P5) file: " + path);
    }
    int w = 0, h = 0;
    long maxval = 0;
    try {
        w = std::stoi(next_pgm_token(in, path));
        h = std::stoi(next_pgm_token(in, path));
        maxval = std::stol(next_pgm_token(in, path));
    } catch (const std::exception&) {
        throw std::runtime_error("malformed header: " + path);
    }
    if (w < 1 || h < 1) throw std::runtime_error("bad image extent in " + path);
    if (maxval != 65535) {
        throw std::runtime_error("expected 16-bit samples (maxval 65535) in " + path);
    }
    // next_pgm_token consumed the single whitespace byte after maxval

    RangeMap range;
    const std::string sidecar_path = path + ".json";
    if (fs::exists(sidecar_path)) {
        nlohmann::json sidecar;
        try {
            sidecar = nlohmann::json::parse(read_text_file(sidecar_path));
            range.lo = sidecar.at("lo").get<double>();
            range.hi = sidecar.at("hi").get<double>();
        } catch (const std::exception& e) {
            throw std::runtime_error("bad sidecar " + sidecar_path + ": " + e.what());
        }
        if (!(range.hi > range.lo)) {
            throw std::runtime_error("bad sidecar range in " + sidecar_path);
        }
    }

    std::vector<unsigned char> buf(static_cast<size_t>(w) * h * 2);
    if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()))) {
        throw std::runtime_error("truncated pixel data: " + path);
    }
    Image2D img(h, w);
    const double scale = (range.hi - range.lo) / 65535.0;
    for (size_t i = 0; i < img.size(); ++i) {
        const uint16_t v = static_cast<uint16_t>((buf[2 * i] << 8) | buf[2 * i + 1]);
        img.data[i] = range.lo + scale * v;
    }
    if (range_out != nullptr) *range_out = range;
    return img;
}

void write_npy(const std::string& path, const Image2D& img) {
    std::string header = "{'descr': '<f8', 'fortran_order': False, 'shape': (" +
                         std::to_string(img.height) + ", " + std::to_string(img.width) + "), }";
    const size_t unpadded = 10 + header.size() + 1;  // magic+version+len, dict, newline
    header.append(64 - (unpadded % 64 == 0 ? 64 : unpadded % 64), ' ');
    header.push_back('\n');

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out.write("\x93NUMPY\x01\x00", 8);
    const auto hlen = static_cast<uint16_t>(header.size());
    out.write(reinterpret_cast<const char*>(&hlen), 2);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(reinterpret_cast<const char*>(img.data.data()),
              static_cast<std::streamsize>(img.size() * sizeof(double)));
    if (!out) throw std::runtime_error("write failed: " + path);
}

namespace {

// Pulls "key': value" out of the array-file header dict (single quotes,
// fixed key order is not assumed).
std::string npy_header_field(const std::string& header, const std::string& key,
                             const std::string& path) {
    const auto kpos = header.find("'" + key + "'");
    if (kpos == std::string::npos) throw std::runtime_error("header missing " + key + ": " + path);
    auto vpos = header.find(':', kpos);
    if (vpos == std::string::npos) throw std::runtime_error("malformed header: " + path);
    ++vpos;
    while (vpos < header.size() && header[vpos] == ' ') ++vpos;
    auto vend = vpos;
    if (header[vpos] == '(') {
        vend = header.find(')', vpos);
        if (vend == std::string::npos) throw std::runtime_error("malformed header: " + path);
        ++vend;
    } else {
        while (vend < header.size() && header[vend] != ',' && header[vend] != '}') ++vend;
    }
    return header.substr(vpos, vend - vpos);
}

}  // namespace

Image2D read_npy(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, "\x93NUMPY", 6) != 0) {
        throw std::runtime_error("not an npy file: " + path);
    }
    const int major = magic[6];
    uint32_t hlen = 0;
    if (major == 1) {
        uint16_t h16 = 0;
        if (!in.read(reinterpret_cast<char*>(&h16), 2)) throw std::runtime_error("truncated: " + path);
        hlen = h16;
    } else if (major == 2) {
        if (!in.read(reinterpret_cast<char*>(&hlen), 4)) throw std::runtime_error("truncated: " + path);
    } else {
        throw std::runtime_error("unsupported npy version in " + path);
    }
    std::string header(hlen, '\0');
    if (!in.read(header.data(), hlen)) throw std::runtime_error("truncated header: " + path);

    const std::string descr = npy_header_field(header, "descr", path);
    const bool f4 = descr.find("<f4") != std::string::npos;
    const bool f8 = descr.find("<f8") != std::string::npos;
    if (!f4 && !f8) {
        throw std::runtime_error("unsupported dtype " + descr + " (need <f4 or <f8): " + path);
    }
    if (npy_header_field(header, "fortran_order", path).find("False") == std::string::npos) {
        throw std::runtime_error("fortran-order arrays unsupported: " + path);
    }
    const std::string shape = npy_header_field(header, "shape", path);
    int h = 0, w = 0;
    if (std::sscanf(shape.c_str(), "(%d, %d)", &h, &w) != 2 &&
        std::sscanf(shape.c_str(), "(%d,%d)", &h, &w) != 2) {
        throw std::runtime_error("need a 2-D array, got shape " + shape + ": " + path);
    }
    if (h < 1 || w < 1) throw std::runtime_error("bad array shape in " + path);

    Image2D img(h, w);
    const size_t n = img.size();
    if (f8) {
        if (!in.read(reinterpret_cast<char*>(img.data.data()),
                     static_cast<std::streamsize>(n * sizeof(double)))) {
            throw std::runtime_error("truncated data: " + path);
        }
    } else {
        std::vector<float> tmp(n);
        if (!in.read(reinterpret_cast<char*>(tmp.data()),
                     static_cast<std::streamsize>(n * sizeof(float)))) {
            throw std::runtime_error("truncated data: " + path);
        }
        for (size_t i = 0; i < n; ++i) img.data[i] = tmp[i];
    }
    return img;
}

Image2D read_image_file(const std::string& path) {
    const std::string ext = fs::path(path).extension().string();
    if (ext == ".pgm") return read_pgm16(path);
    if (ext == ".npy") return read_npy(path);
    throw std::runtime_error("unsupported image extension '" + ext + "': " + path);
}

// ---------------------------------------------------------------------------
// resampling

namespace {

struct AxisMap {
    std::vector<int> start;
    std::vector<std::vector<double>> weights;  // normalized per output cell
};

AxisMap make_axis_map(int in_n, int out_n) {
    AxisMap m;
    m.start.resize(out_n);
    m.weights.resize(out_n);
    for (int o = 0; o < out_n; ++o) {
        const double a = static_cast<double>(o) * in_n / out_n;
        const double b = static_cast<double>(o + 1) * in_n / out_n;
        const int i0 = static_cast<int>(std::floor(a));
        const int i1 = std::min(in_n, static_cast<int>(std::ceil(b)));
        m.start[o] = i0;
        double total = 0.0;
        for (int i = i0; i < i1; ++i) {
            const double ov = std::min<double>(i + 1, b) - std::max<double>(i, a);
            m.weights[o].push_back(std::max(ov, 0.0));
            total += std::max(ov, 0.0);
        }
        for (auto& w : m.weights[o]) w /= total;  // exact constant preservation
    }
    return m;
}

}  // namespace

Image2D area_resample(const Image2D& img, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw std::invalid_argument("area_resample: bad target shape");
    if (img.height < 1 || img.width < 1) throw std::invalid_argument("area_resample: empty image");
    const AxisMap rows = make_axis_map(img.height, out_h);
    const AxisMap cols = make_axis_map(img.width, out_w);

    Image2D tmp(out_h, img.width);
    for (int o = 0; o < out_h; ++o) {
        for (int c = 0; c < img.width; ++c) {
            double acc = 0.0;
            for (size_t k = 0; k < rows.weights[o].size(); ++k) {
                acc += rows.weights[o][k] * img.at(rows.start[o] + static_cast<int>(k), c);
            }
            tmp.at(o, c) = acc;
        }
    }
    Image2D out(out_h, out_w);
    for (int r = 0; r < out_h; ++r) {
        for (int o = 0; o < out_w; ++o) {
            double acc = 0.0;
            for (size_t k = 0; k < cols.weights[o].size(); ++k) {
                acc += cols.weights[o][k] * tmp.at(r, cols.start[o] + static_cast<int>(k));
            }
            out.at(r, o) = acc;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// datasets

SplitCounts split_counts(int n) {
    if (n < 1) throw std::invalid_argument("split_counts: need at least one sample");
    SplitCounts c;
    c.test = static_cast<int>(std::llround(n * 27.0 / 269.0));
    c.val = static_cast<int>(std::llround(n * 15.0 / 269.0));
    c.train = n - c.test - c.val;
    return c;
}

void write_phantom_dataset(const std::string& root, const PhantomConfig& cfg,
                           const std::optional<SplitCounts>& splits_opt) {
    validate(cfg);
    SplitCounts counts = splits_opt.value_or(split_counts(cfg.count));
    if (counts.train + counts.val + counts.test != cfg.count || counts.train < 0 ||
        counts.val < 0 || counts.test < 0) {
        throw std::invalid_argument("split sizes must be nonnegative and sum to the sample count");
    }

    fs::create_directories(fs::path(root) / "attenuation");
    fs::create_directories(fs::path(root) / "darkfield");
    fs::create_directories(fs::path(root) / "noise_sigma");
    fs::create_directories(fs::path(root) / "meta");

    nlohmann::json splits = nlohmann::json::object();
    nlohmann::json checksums = nlohmann::json::object();
    for (int i = 0; i < cfg.count; ++i) {
        const PhantomDetail d = generate_phantom_detail(cfg, i);
        const std::string id = phantom_id(i);
        write_pgm16((fs::path(root) / "attenuation" / (id + ".pgm")).string(), d.attenuation);
        write_pgm16((fs::path(root) / "darkfield" / (id + ".pgm")).string(), d.darkfield);
        write_pgm16((fs::path(root) / "noise_sigma" / (id + ".pgm")).string(), d.sigma,
                    RangeMap{0.0, cfg.sigma_hi});
        const Split s = i < counts.train            ? Split::kTrain
                        : i < counts.train + counts.val ? Split::kVal
                                                        : Split::kTest;
        splits[id] = split_name(s);
        checksums[id] = {{"attenuation", hex64(checksum_doubles(d.attenuation.data))},
                         {"darkfield", hex64(checksum_doubles(d.darkfield.data))},
                         {"noise_sigma", hex64(checksum_doubles(d.sigma.data))}};
    }

    nlohmann::json manifest{
        {"kind", "phantom-dataset"},
        {"tool_version", kToolVersion},
        {"created", now_iso8601()},
        {"config",
         {{"height", cfg.height},
          {"width", cfg.width},
          {"count", cfg.count},
          {"sigma_lo", cfg.sigma_lo},
          {"sigma_hi", cfg.sigma_hi},
          {"confounder_prob", cfg.confounder_prob},
          {"stripes", cfg.stripes},
          {"texture_cells", cfg.texture_cells},
          {"seed", cfg.seed}}},
        {"counts", {{"train", counts.train}, {"val", counts.val}, {"test", counts.test}}},
        {"splits", splits},
        {"checksums", checksums}};
    write_text_file((fs::path(root) / "meta" / "manifest.json").string(), manifest.dump(2) + "\n");
}

namespace {

std::vector<std::string> list_image_stems(const fs::path& dir) {
    std::vector<std::string> stems;
    if (!fs::is_directory(dir)) return stems;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string ext = entry.path().extension().string();
        if (ext == ".pgm" || ext == ".npy") stems.push_back(entry.path().stem().string());
    }
    std::sort(stems.begin(), stems.end());
    return stems;
}

fs::path find_image_file(const fs::path& dir, const std::string& id) {
    for (const char* ext : {".pgm", ".npy"}) {
        fs::path p = dir / (id + ext);
        if (fs::exists(p)) return p;
    }
    throw std::runtime_error("no image file for id " + id + " under " + dir.string());
}

std::string join_ids(const std::vector<std::string>& ids, size_t limit = 20) {
    std::string out;
    for (size_t i = 0; i < ids.size() && i < limit; ++i) {
        if (!out.empty()) out += ", ";
        out += ids[i];
    }
    if (ids.size() > limit) out += ", ... (" + std::to_string(ids.size()) + " total)";
    return out;
}

}  // namespace

std::vector<PairedSample> load_dataset(const std::string& root, uint64_t split_seed) {
    const fs::path att_dir = fs::path(root) / "attenuation";
    const fs::path df_dir = fs::path(root) / "darkfield";
    const fs::path sigma_dir = fs::path(root) / "noise_sigma";

    const std::vector<std::string> att_ids = list_image_stems(att_dir);
    const std::vector<std::string> df_ids = list_image_stems(df_dir);
    if (att_ids.empty()) {
        throw std::runtime_error("empty dataset: no images under " + att_dir.string());
    }

    std::vector<std::string> orphans;
    std::set<std::string> att_set(att_ids.begin(), att_ids.end());
    std::set<std::string> df_set(df_ids.begin(), df_ids.end());
    for (const auto& id : att_ids) {
        if (df_set.find(id) == df_set.end()) orphans.push_back(id + " (no darkfield)");
    }
    for (const auto& id : df_ids) {
        if (att_set.find(id) == att_set.end()) orphans.push_back(id + " (no attenuation)");
    }
    if (!orphans.empty()) {
        throw std::runtime_error("unpaired images in " + root + ": " + join_ids(orphans));
    }

    // Split assignment: explicit manifest wins; otherwise the seeded ratio rule.
    std::vector<Split> assignment(att_ids.size());
    const fs::path manifest_path = fs::path(root) / "meta" / "manifest.json";
    if (fs::exists(manifest_path)) {
        nlohmann::json manifest;
        try {
            manifest = nlohmann::json::parse(read_text_file(manifest_path.string()));
        } catch (const std::exception& e) {
            throw std::runtime_error("bad manifest " + manifest_path.string() + ": " + e.what());
        }
        const auto& splits = manifest.at("splits");
        for (size_t i = 0; i < att_ids.size(); ++i) {
            if (!splits.contains(att_ids[i])) {
                throw std::runtime_error("manifest " + manifest_path.string() +
                                         " lacks a split for id " + att_ids[i]);
            }
            assignment[i] = split_from_name(splits.at(att_ids[i]).get<std::string>());
        }
    } else {
        std::vector<size_t> order(att_ids.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng rng(mix_seed(split_seed, 0x59117ULL));
        for (size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[rng.uniform_int(0, static_cast<int>(i) - 1)]);
        }
        const SplitCounts counts = split_counts(static_cast<int>(att_ids.size()));
        for (size_t pos = 0; pos < order.size(); ++pos) {
            const Split s = pos < static_cast<size_t>(counts.train)        ? Split::kTrain
                            : pos < static_cast<size_t>(counts.train + counts.val) ? Split::kVal
                                                                                   : Split::kTest;
            assignment[order[pos]] = s;
        }
    }

    std::vector<PairedSample> samples;
    samples.reserve(att_ids.size());
    for (size_t i = 0; i < att_ids.size(); ++i) {
        const std::string& id = att_ids[i];
        PairedSample s;
        s.id = id;
        const fs::path att_path = find_image_file(att_dir, id);
        const fs::path df_path = find_image_file(df_dir, id);
        s.attenuation = read_image_file(att_path.string());
        s.darkfield = read_image_file(df_path.string());
        if (!s.attenuation.same_shape(*s.darkfield)) {
            throw std::runtime_error("shape mismatch between " + att_path.string() + " and " +
                                     df_path.string());
        }
        validate_unit_range(s.attenuation, att_path.string());
        validate_unit_range(*s.darkfield, df_path.string());
        if (fs::is_directory(sigma_dir)) {
            for (const char* ext : {".pgm", ".npy"}) {
                fs::path p = sigma_dir / (id + ext);
                if (fs::exists(p)) {
                    s.truth_noise_sigma = read_image_file(p.string());
                    break;
                }
            }
        }
        s.split = assignment[i];
        samples.push_back(std::move(s));
    }
    return samples;
}

OodLoadResult load_ood(const std::string& root, int target_h, int target_w) {
    if (target_h < 1 || target_w < 1) throw std::invalid_argument("load_ood: bad target shape");
    fs::path dir(root);
    if (fs::is_directory(dir / "attenuation")) dir /= "attenuation";
    if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());

    OodLoadResult result;
    for (const auto& id : list_image_stems(dir)) {
        Image2D img;
        try {
            img = read_image_file(find_image_file(dir, id).string());
            if (!image_finite(img)) throw std::runtime_error("non-finite values");
        } catch (const std::exception& e) {
            std::cerr << "warning: skipping unreadable input " << id << ": " << e.what() << "\n";
            ++result.skipped;
            continue;
        }
        const double lo = image_min(img), hi = image_max(img);
        if (lo < 0.0 || hi > 1.0) {  // foreign range: bring into the unit interval
            const double span = hi > lo ? hi - lo : 1.0;
            for (auto& v : img.data) v = (v - lo) / span;
        }
        PairedSample s;
        s.id = id;
        s.attenuation = area_resample(img, target_h, target_w);
        s.split = Split::kOod;
        result.samples.push_back(std::move(s));
    }
    if (result.samples.empty() && result.skipped == 0) {
        throw std::runtime_error("empty dataset: no images under " + dir.string());
    }
    return result;
}

}  // namespace darkfield
