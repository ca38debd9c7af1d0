#include "darkfield/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace darkfield {

namespace {

void check_shapes(const Image2D& a, const Image2D& b, const char* who) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(std::string(who) + ": shape mismatch " +
                                    std::to_string(a.height) + "x" + std::to_string(a.width) +
                                    " vs " + std::to_string(b.height) + "x" +
                                    std::to_string(b.width));
    }
}

std::vector<double> gaussian_window(int n, double sigma) {
    std::vector<double> w(n);
    const double c = 0.5 * (n - 1);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        w[i] = std::exp(-0.5 * (i - c) * (i - c) / (sigma * sigma));
        sum += w[i];
    }
    for (double& v : w) v /= sum;
    return w;
}

// Valid-mode separable correlation with the (normalized) window.
Image2D filter_valid(const Image2D& img, const std::vector<double>& win) {
    const int n = static_cast<int>(win.size());
    const int oh = img.height - n + 1, ow = img.width - n + 1;
    Image2D tmp(img.height, ow);
    for (int i = 0; i < img.height; ++i) {
        for (int j = 0; j < ow; ++j) {
            double s = 0.0;
            for (int d = 0; d < n; ++d) s += win[d] * img.at(i, j + d);
            tmp.at(i, j) = s;
        }
    }
    Image2D out(oh, ow);
    for (int i = 0; i < oh; ++i) {
        for (int j = 0; j < ow; ++j) {
            double s = 0.0;
            for (int d = 0; d < n; ++d) s += win[d] * tmp.at(i + d, j);
            out.at(i, j) = s;
        }
    }
    return out;
}

MetricStats stats_of(const std::vector<double>& xs) {
    MetricStats st;
    const double n = static_cast<double>(xs.size());
    for (double x : xs) st.mean += x;
    st.mean /= n;
    double acc = 0.0;
    for (double x : xs) acc += (x - st.mean) * (x - st.mean);
    st.std_dev = std::sqrt(acc / n);
    return st;
}

}  // namespace

double mse(const Image2D& a, const Image2D& b) {
    check_shapes(a, b, "mse");
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

double psnr(const Image2D& a, const Image2D& b, double data_range) {
    if (!(data_range > 0.0)) {
        throw std::invalid_argument("psnr: data_range must be positive");
    }
    const double m = mse(a, b);
    if (m == 0.0) return kPsnrCapDb;
    return std::min(kPsnrCapDb, 10.0 * std::log10(data_range * data_range / m));
}

double ssim(const Image2D& a, const Image2D& b) {
    check_shapes(a, b, "ssim");
    if (std::min(a.height, a.width) < kSsimWindow) {
        throw std::invalid_argument("ssim: image smaller than the " +
                                    std::to_string(kSsimWindow) + "x" +
                                    std::to_string(kSsimWindow) + " window");
    }
    const std::vector<double> win = gaussian_window(kSsimWindow, kSsimSigma);
    const double c1 = kSsimK1 * kSsimK1;  // data range 1
    const double c2 = kSsimK2 * kSsimK2;

    Image2D aa(a.height, a.width), bb(a.height, a.width), ab(a.height, a.width);
    for (size_t i = 0; i < a.size(); ++i) {
        aa.data[i] = a.data[i] * a.data[i];
        bb.data[i] = b.data[i] * b.data[i];
        ab.data[i] = a.data[i] * b.data[i];
    }
    const Image2D mu_a = filter_valid(a, win);
    const Image2D mu_b = filter_valid(b, win);
    const Image2D e_aa = filter_valid(aa, win);
    const Image2D e_bb = filter_valid(bb, win);
    const Image2D e_ab = filter_valid(ab, win);

    double acc = 0.0;
    for (size_t i = 0; i < mu_a.size(); ++i) {
        const double ma = mu_a.data[i], mb = mu_b.data[i];
        const double va = e_aa.data[i] - ma * ma;
        const double vb = e_bb.data[i] - mb * mb;
        const double cov = e_ab.data[i] - ma * mb;
        acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
               ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    return acc / static_cast<double>(mu_a.size());
}

MetricsReport stage_report(const std::vector<std::pair<Image2D, Image2D>>& pairs, int stage) {
    if (pairs.empty()) {
        throw std::invalid_argument("stage_report: empty pair list");
    }
    MetricsReport rep;
    rep.stage = stage;
    rep.sample_count = static_cast<int>(pairs.size());
    std::vector<double> ms, ps, ss;
    for (const auto& [generated, target] : pairs) {
        ImageMetrics im;
        im.mse = mse(generated, target);
        im.psnr = psnr(generated, target);
        im.ssim = ssim(generated, target);
        rep.per_image.push_back(im);
        ms.push_back(im.mse);
        ps.push_back(im.psnr);
        ss.push_back(im.ssim);
    }
    rep.mse = stats_of(ms);
    rep.psnr = stats_of(ps);
    rep.ssim = stats_of(ss);
    return rep;
}

std::string report_table(const std::vector<MetricsReport>& rows) {
    std::ostringstream os;
    os << "Stage |          MSE        |        PSNR        |        SSIM        | n\n";
    os << "------+---------------------+--------------------+--------------------+----\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf),
                      "%5d | %8.5f +- %7.5f | %7.3f +- %7.3f | %7.4f +- %7.4f | %d\n", r.stage,
                      r.mse.mean, r.mse.std_dev, r.psnr.mean, r.psnr.std_dev, r.ssim.mean,
                      r.ssim.std_dev, r.sample_count);
        os << buf;
    }
    os << "(std is population std over the sample set)\n";
    return os.str();
}

std::string emit_reports(const std::vector<MetricsReport>& rows) {
    std::ostringstream os;
    for (const auto& r : rows) {
        nlohmann::json j;
        j["stage"] = r.stage;
        j["sample_count"] = r.sample_count;
        j["mse"] = {{"mean", r.mse.mean}, {"std", r.mse.std_dev}};
        j["psnr"] = {{"mean", r.psnr.mean}, {"std", r.psnr.std_dev}};
        j["ssim"] = {{"mean", r.ssim.mean}, {"std", r.ssim.std_dev}};
        nlohmann::json per = nlohmann::json::array();
        for (const auto& im : r.per_image) per.push_back({im.mse, im.psnr, im.ssim});
        j["per_image"] = per;
        os << j.dump() << "\n";
    }
    return os.str();
}

std::vector<MetricsReport> parse_reports(const std::string& text) {
    std::vector<MetricsReport> rows;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        MetricsReport r;
        r.stage = j.at("stage").get<int>();
        r.sample_count = j.at("sample_count").get<int>();
        r.mse = {j.at("mse").at("mean").get<double>(), j.at("mse").at("std").get<double>()};
        r.psnr = {j.at("psnr").at("mean").get<double>(), j.at("psnr").at("std").get<double>()};
        r.ssim = {j.at("ssim").at("mean").get<double>(), j.at("ssim").at("std").get<double>()};
        for (const auto& im : j.at("per_image")) {
            r.per_image.push_back({im.at(0).get<double>(), im.at(1).get<double>(),
                                   im.at(2).get<double>()});
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

namespace {

// average ranks, 1-based, ties share the mean of their rank positions
std::vector<double> average_ranks(const std::vector<double>& v) {
    const size_t n = v.size();
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("spearman: length mismatch");
    if (a.size() < 2) throw std::invalid_argument("spearman: need at least two points");
    const std::vector<double> ra = average_ranks(a);
    const std::vector<double> rb = average_ranks(b);
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double da = ra[i] - ma, db = rb[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa <= 0.0 || sbb <= 0.0) throw std::invalid_argument("spearman: constant sequence");
    return sab / std::sqrt(saa * sbb);
}

}  // namespace darkfield
