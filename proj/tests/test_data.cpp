#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include "darkfield/data.hpp"
#include "darkfield/ggd.hpp"
#include "test_support.hpp"

using darkfield::Image2D;
using darkfield::PhantomConfig;
using darkfield::Split;
using testsup::lcg_image;
using testsup::TempDir;

namespace {

PhantomConfig small_phantoms() {
    PhantomConfig cfg;
    cfg.height = 32;
    cfg.width = 32;
    cfg.count = 8;
    cfg.seed = 7;
    cfg.texture_cells = 4;
    return cfg;
}

int count_split(const std::vector<darkfield::PairedSample>& ds, Split s) {
    int n = 0;
    for (const auto& p : ds) n += p.split == s;
    return n;
}

}  // namespace

TEST_CASE("phantom synthesis is a pure function of (seed, index)") {
    const PhantomConfig cfg = small_phantoms();
    const auto a = darkfield::generate_phantom_detail(cfg, 3);
    const auto b = darkfield::generate_phantom_detail(cfg, 3);
    CHECK(a.attenuation.data == b.attenuation.data);
    CHECK(a.darkfield.data == b.darkfield.data);
    CHECK(a.sigma.data == b.sigma.data);

    const auto c = darkfield::generate_phantom_detail(cfg, 4);
    CHECK(a.attenuation.data != c.attenuation.data);

    PhantomConfig reseeded = cfg;
    reseeded.seed = 8;
    const auto d = darkfield::generate_phantom_detail(reseeded, 3);
    CHECK(a.attenuation.data != d.attenuation.data);
}

TEST_CASE("phantom pairs stay in range with a dim target outside the lungs") {
    PhantomConfig cfg = small_phantoms();
    cfg.height = cfg.width = 64;
    for (int idx : {0, 1, 2, 5}) {
        const auto ph = darkfield::generate_phantom_detail(cfg, idx);
        CHECK_NOTHROW(darkfield::validate_unit_range(ph.attenuation, "attenuation"));
        CHECK_NOTHROW(darkfield::validate_unit_range(ph.darkfield, "darkfield"));
        CHECK_NOTHROW(darkfield::validate_unit_range(ph.darkfield_clean, "clean"));

        bool has_lung = false, has_outside = false;
        for (size_t i = 0; i < ph.lung_mask.size(); ++i) {
            if (ph.lung_mask.data[i] > 0.5) {
                has_lung = true;
            } else {
                has_outside = true;
                CHECK(ph.darkfield_clean.data[i] < 0.1);
            }
        }
        CHECK(has_lung);
        CHECK(has_outside);

        for (size_t i = 0; i < ph.sigma.size(); ++i) {
            CHECK(ph.sigma.data[i] >= cfg.sigma_lo - 1e-12);
            CHECK(ph.sigma.data[i] <= cfg.sigma_hi + 1e-12);
        }
        CHECK(ph.beta >= 1.5);
        CHECK(ph.beta <= 3.0);
    }
}

TEST_CASE("the noisy target is exactly clean + recorded noise draw, clamped") {
    const PhantomConfig cfg = small_phantoms();
    const auto ph = darkfield::generate_phantom_detail(cfg, 2);
    const Image2D draw =
        darkfield::ggd_sample(cfg.height, cfg.width, ph.noise_params, ph.noise_seed);
    for (size_t i = 0; i < draw.size(); ++i) {
        const double want = std::clamp(ph.darkfield_clean.data[i] + draw.data[i], 0.0, 1.0);
        CHECK(ph.darkfield.data[i] == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("injected noise realizes the configured sigma level") {
    PhantomConfig cfg;
    cfg.height = cfg.width = 128;
    cfg.count = 1;
    cfg.sigma_lo = cfg.sigma_hi = 0.04;  // flat noise scale
    cfg.seed = 11;
    const auto ph = darkfield::generate_phantom_detail(cfg, 0);

    // sample std of (noisy - clean) over unclamped pixels
    double sum = 0.0, sum2 = 0.0;
    int n = 0;
    for (size_t i = 0; i < ph.darkfield.size(); ++i) {
        const double clean = ph.darkfield_clean.data[i];
        if (clean < 0.2 || clean > 0.8) continue;  // stay clear of the clamp
        const double d = ph.darkfield.data[i] - clean;
        sum += d;
        sum2 += d * d;
        ++n;
    }
    REQUIRE(n > 2000);
    const double mean = sum / n;
    const double stddev = std::sqrt(sum2 / n - mean * mean);
    CHECK(stddev == doctest::Approx(0.04).epsilon(0.05));

    // the recorded params reproduce that sigma analytically
    CHECK(darkfield::effective_sigma(ph.noise_params.alpha.data[0],
                                     ph.noise_params.beta.data[0]) ==
          doctest::Approx(0.04).epsilon(1e-9));
}

TEST_CASE("16-bit image files round-trip within quantization error") {
    TempDir tmp("pgm");
    const Image2D img = lcg_image(3, 9, 7);
    const std::string path = tmp.sub("a.pgm");
    darkfield::write_pgm16(path, img);
    darkfield::RangeMap range;
    const Image2D back = darkfield::read_pgm16(path, &range);
    REQUIRE(back.same_shape(img));
    CHECK(range.lo == 0.0);
    CHECK(range.hi == 1.0);
    for (size_t i = 0; i < img.size(); ++i) {
        CHECK(back.data[i] == doctest::Approx(img.data[i]).epsilon(1.0 / 65535));
    }

    // a non-unit range goes through the sidecar
    Image2D wide(2, 2);
    wide.data = {-1.0, 0.0, 2.0, 3.0};
    const std::string wpath = tmp.sub("wide.pgm");
    darkfield::write_pgm16(wpath, wide, {-1.0, 3.0});
    darkfield::RangeMap wrange;
    const Image2D wback = darkfield::read_pgm16(wpath, &wrange);
    CHECK(wrange.lo == -1.0);
    CHECK(wrange.hi == 3.0);
    for (size_t i = 0; i < wide.size(); ++i) {
        CHECK(wback.data[i] == doctest::Approx(wide.data[i]).epsilon(1e-4));
    }
}

TEST_CASE("16-bit samples are stored big-endian with the full dynamic range") {
    TempDir tmp("pgm_be");
    Image2D img(1, 2);
    img.data = {0.0, 1.0};
    const std::string path = tmp.sub("be.pgm");
    darkfield::write_pgm16(path, img);

    std::ifstream f(path, std::ios::binary);
    std::string header;
    std::getline(f, header);
    CHECK(header == "P5");
    int w, h, maxval;
    f >> w >> h >> maxval;
    CHECK(w == 2);
    CHECK(h == 1);
    CHECK(maxval == 65535);
    f.get();  // single whitespace after maxval
    unsigned char bytes[4];
    f.read(reinterpret_cast<char*>(bytes), 4);
    CHECK(bytes[0] == 0x00);
    CHECK(bytes[1] == 0x00);
    CHECK(bytes[2] == 0xFF);  // high byte first
    CHECK(bytes[3] == 0xFF);
}

TEST_CASE("a bare file without sidecar reads as unit range") {
    TempDir tmp("pgm_bare");
    const std::string path = tmp.sub("bare.pgm");
    std::ofstream f(path, std::ios::binary);
    f << "P5\n2 1\n65535\n";
    const unsigned char bytes[4] = {0x00, 0x01, 0x80, 0x00};
    f.write(reinterpret_cast<const char*>(bytes), 4);
    f.close();
    const Image2D img = darkfield::read_pgm16(path);
    CHECK(img.data[0] == doctest::Approx(1.0 / 65535).epsilon(1e-12));
    CHECK(img.data[1] == doctest::Approx(32768.0 / 65535).epsilon(1e-12));
}

TEST_CASE("array files round-trip and the float32 variant is accepted") {
    TempDir tmp("npy");
    const Image2D img = lcg_image(4, 5, 8);
    const std::string path = tmp.sub("a.npy");
    darkfield::write_npy(path, img);
    const Image2D back = darkfield::read_npy(path);
    REQUIRE(back.same_shape(img));
    CHECK(back.data == img.data);  // f8 storage is exact

    // hand-built little-endian float32 file
    const std::string f4path = tmp.sub("f.npy");
    {
        std::string header = "{'descr': '<f4', 'fortran_order': False, 'shape': (2, 3), }";
        const size_t total = 10 + header.size();
        header.append(((total + 63) / 64) * 64 - total, ' ');
        header.back() = '\n';
        std::ofstream f(f4path, std::ios::binary);
        const unsigned char magic[10] = {0x93, 'N', 'U', 'M', 'P', 'Y', 1, 0,
                                         static_cast<unsigned char>(header.size() & 0xFF),
                                         static_cast<unsigned char>(header.size() >> 8)};
        f.write(reinterpret_cast<const char*>(magic), 10);
        f << header;
        const float vals[6] = {0.0f, 0.25f, 0.5f, 0.75f, 1.0f, 0.125f};
        f.write(reinterpret_cast<const char*>(vals), sizeof(vals));
    }
    const Image2D f4 = darkfield::read_npy(f4path);
    REQUIRE(f4.height == 2);
    REQUIRE(f4.width == 3);
    CHECK(f4.data == std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0, 0.125});

    CHECK_THROWS_AS(darkfield::read_image_file(tmp.sub("x.txt")), std::runtime_error);
}

TEST_CASE("area resampling matches brute-force references and preserves constants") {
    Image2D img(2, 2);
    img.data = {0, 1, 2, 3};
    const Image2D up = darkfield::area_resample(img, 3, 3);
    const std::vector<double> want{0, 0.5, 1, 1, 1.5, 2, 2, 2.5, 3};
    REQUIRE(up.size() == want.size());
    for (size_t i = 0; i < want.size(); ++i) {
        CHECK(up.data[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }

    // independently computed 4x6 -> 3x2 reference
    const Image2D src = lcg_image(3, 4, 6);
    const Image2D down = darkfield::area_resample(src, 3, 2);
    const std::vector<double> ref{0.42157295, 0.54874462, 0.57607521,
                                  0.7363812,  0.52496198, 0.61462183};
    for (size_t i = 0; i < ref.size(); ++i) {
        CHECK(down.data[i] == doctest::Approx(ref[i]).epsilon(1e-7));
    }

    // awkward prime-ish target: constants survive exactly
    const Image2D flat(100, 100, 0.437);
    const Image2D odd = darkfield::area_resample(flat, 47, 53);
    for (double v : odd.data) CHECK(v == doctest::Approx(0.437).epsilon(1e-14));

    CHECK_THROWS_AS(darkfield::area_resample(img, 0, 3), std::invalid_argument);
}

TEST_CASE("the ratio split rule reproduces the reference proportions") {
    const auto s269 = darkfield::split_counts(269);
    CHECK(s269.train == 227);
    CHECK(s269.val == 15);
    CHECK(s269.test == 27);
    const auto s10 = darkfield::split_counts(10);
    CHECK(s10.train + s10.val + s10.test == 10);
    CHECK(s10.test == 1);
}

TEST_CASE("dataset write/load honors the recorded split assignment") {
    TempDir tmp("ds");
    PhantomConfig cfg = small_phantoms();
    darkfield::SplitCounts splits{5, 1, 2};
    darkfield::write_phantom_dataset(tmp.str(), cfg, splits);

    const auto ds = darkfield::load_dataset(tmp.str(), 999);
    REQUIRE(ds.size() == 8);
    CHECK(count_split(ds, Split::kTrain) == 5);
    CHECK(count_split(ds, Split::kVal) == 1);
    CHECK(count_split(ds, Split::kTest) == 2);
    for (const auto& s : ds) {
        CHECK(s.darkfield.has_value());
        CHECK(s.truth_noise_sigma.has_value());
        CHECK(s.attenuation.height == 32);
    }
    // the shuffle seed must not matter when the manifest is present
    const auto ds2 = darkfield::load_dataset(tmp.str(), 1000);
    for (size_t i = 0; i < ds.size(); ++i) {
        CHECK(ds[i].id == ds2[i].id);
        CHECK(ds[i].split == ds2[i].split);
    }

    CHECK_THROWS_AS(
        darkfield::write_phantom_dataset(tmp.sub("bad"), cfg, darkfield::SplitCounts{5, 1, 1}),
        std::invalid_argument);
}

TEST_CASE("manifest-less directories fall back to the seeded ratio shuffle") {
    TempDir tmp("plain");
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(tmp.str()) / "attenuation");
    fs::create_directories(fs::path(tmp.str()) / "darkfield");
    for (int i = 0; i < 10; ++i) {
        char name[16];
        std::snprintf(name, sizeof(name), "s%02d.pgm", i);
        darkfield::write_pgm16((fs::path(tmp.str()) / "attenuation" / name).string(),
                               lcg_image(100 + i, 32, 32));
        darkfield::write_pgm16((fs::path(tmp.str()) / "darkfield" / name).string(),
                               lcg_image(200 + i, 32, 32));
    }
    const auto ds = darkfield::load_dataset(tmp.str(), 5);
    REQUIRE(ds.size() == 10);
    const auto want = darkfield::split_counts(10);
    CHECK(count_split(ds, Split::kTrain) == want.train);
    CHECK(count_split(ds, Split::kVal) == want.val);
    CHECK(count_split(ds, Split::kTest) == want.test);

    const auto again = darkfield::load_dataset(tmp.str(), 5);
    for (size_t i = 0; i < ds.size(); ++i) CHECK(ds[i].split == again[i].split);
}

TEST_CASE("orphans, shape mismatches, and empty roots are loud errors") {
    TempDir tmp("orphan");
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(tmp.str()) / "attenuation");
    fs::create_directories(fs::path(tmp.str()) / "darkfield");
    darkfield::write_pgm16(tmp.sub("attenuation/only_a.pgm"), lcg_image(1, 32, 32));
    CHECK_THROWS_WITH_AS(darkfield::load_dataset(tmp.str(), 1), doctest::Contains("only_a"),
                         std::runtime_error);

    darkfield::write_pgm16(tmp.sub("darkfield/only_a.pgm"), lcg_image(2, 32, 16));
    CHECK_THROWS_AS(darkfield::load_dataset(tmp.str(), 1), std::runtime_error);

    TempDir empty("empty");
    CHECK_THROWS_AS(darkfield::load_dataset(empty.str(), 1), std::runtime_error);
}

TEST_CASE("target-free ingestion resamples, normalizes, and skips junk") {
    TempDir tmp("ood");
    darkfield::write_pgm16(tmp.sub("big.pgm"), lcg_image(9, 40, 40));
    // values outside [0,1] via sidecar range
    Image2D wide(40, 40);
    for (size_t i = 0; i < wide.size(); ++i) wide.data[i] = -2.0 + 6.0 * (i % 7) / 7.0;
    darkfield::write_pgm16(tmp.sub("wide.pgm"), wide, {-2.0, 4.0});
    // junk file that must be skipped with a warning
    std::ofstream junk(tmp.sub("junk.pgm"), std::ios::binary);
    junk << "not an image";
    junk.close();

    const auto res = darkfield::load_ood(tmp.str(), 24, 16);
    CHECK(res.skipped == 1);
    REQUIRE(res.samples.size() == 2);
    for (const auto& s : res.samples) {
        CHECK(s.attenuation.height == 24);
        CHECK(s.attenuation.width == 16);
        CHECK(!s.darkfield.has_value());
        CHECK(s.split == Split::kOod);
        CHECK(darkfield::image_min(s.attenuation) >= 0.0);
        CHECK(darkfield::image_max(s.attenuation) <= 1.0);
    }

    TempDir none("oodempty");
    CHECK_THROWS_AS(darkfield::load_ood(none.str(), 24, 16), std::runtime_error);
}

TEST_CASE("phantom config validation rejects nonsense") {
    PhantomConfig cfg = small_phantoms();
    cfg.height = 16;  // below the minimum extent
    CHECK_THROWS_AS(darkfield::validate(cfg), std::invalid_argument);
    cfg = small_phantoms();
    cfg.sigma_lo = 0.0;
    CHECK_THROWS_AS(darkfield::validate(cfg), std::invalid_argument);
    cfg = small_phantoms();
    cfg.sigma_hi = cfg.sigma_lo / 2;
    CHECK_THROWS_AS(darkfield::validate(cfg), std::invalid_argument);
    cfg = small_phantoms();
    cfg.count = 0;
    CHECK_THROWS_AS(darkfield::validate(cfg), std::invalid_argument);
    cfg = small_phantoms();
    cfg.confounder_prob = 1.5;
    CHECK_THROWS_AS(darkfield::validate(cfg), std::invalid_argument);
}
