#include "cstn/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include "cstn/common.hpp"

namespace cstn {

namespace {

void require_pair(const Tensor& a, const Tensor& b) {
    if (!a.defined() || !b.defined() || a.shape() != b.shape())
        throw DataError("metric inputs must share a shape, got " +
                        (a.defined() ? shape_str(a.shape()) : "undefined") + " and " +
                        (b.defined() ? shape_str(b.shape()) : "undefined"));
    if (a.numel() == 0) throw DataError("metric inputs are empty");
}

}  // namespace

double mse(const Tensor& a, const Tensor& b) {
    require_pair(a, b);
    double acc = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        const double d = static_cast<double>(a.data()[i]) - b.data()[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.numel());
}

double mae(const Tensor& a, const Tensor& b) {
    require_pair(a, b);
    double acc = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i)
        acc += std::abs(static_cast<double>(a.data()[i]) - b.data()[i]);
    return acc / static_cast<double>(a.numel());
}

namespace {

constexpr int64_t kWin = 11;

std::vector<double> gaussian_window() {
    std::vector<double> g(kWin);
    double total = 0.0;
    for (int64_t i = 0; i < kWin; ++i) {
        const double d = static_cast<double>(i) - 5.0;
        g[static_cast<size_t>(i)] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
        total += g[static_cast<size_t>(i)];
    }
    for (double& v : g) v /= total;
    return g;
}

// valid-region separable filtering: output is (h-10) x (w-10)
std::vector<double> filter_valid(const std::vector<double>& img, int64_t h, int64_t w,
                                 const std::vector<double>& g) {
    const int64_t ow = w - kWin + 1, oh = h - kWin + 1;
    std::vector<double> rows(static_cast<size_t>(h * ow));
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int64_t t = 0; t < kWin; ++t)
                s += g[static_cast<size_t>(t)] * img[static_cast<size_t>(y * w + x + t)];
            rows[static_cast<size_t>(y * ow + x)] = s;
        }
    std::vector<double> out(static_cast<size_t>(oh * ow));
    for (int64_t y = 0; y < oh; ++y)
        for (int64_t x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int64_t t = 0; t < kWin; ++t)
                s += g[static_cast<size_t>(t)] * rows[static_cast<size_t>((y + t) * ow + x)];
            out[static_cast<size_t>(y * ow + x)] = s;
        }
    return out;
}

}  // namespace

double ssim(const Tensor& a, const Tensor& b, double dynamic_range) {
    require_pair(a, b);
    if (a.ndim() != 2)
        throw DataError("ssim expects [H,W] images, got " + shape_str(a.shape()));
    const int64_t h = a.dim(0), w = a.dim(1);
    if (h < kWin || w < kWin)
        throw DataError("ssim needs at least " + std::to_string(kWin) + "x" +
                        std::to_string(kWin) + " images, got " + shape_str(a.shape()));
    if (!(dynamic_range > 0.0))
        throw DataError("ssim dynamic range must be positive, got " +
                        std::to_string(dynamic_range));

    const int64_t n = h * w;
    std::vector<double> xa(static_cast<size_t>(n)), xb(static_cast<size_t>(n));
    std::vector<double> aa(static_cast<size_t>(n)), bb(static_cast<size_t>(n)),
        ab(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        const double va = a.data()[i], vb = b.data()[i];
        xa[static_cast<size_t>(i)] = va;
        xb[static_cast<size_t>(i)] = vb;
        aa[static_cast<size_t>(i)] = va * va;
        bb[static_cast<size_t>(i)] = vb * vb;
        ab[static_cast<size_t>(i)] = va * vb;
    }
    const std::vector<double> g = gaussian_window();
    const std::vector<double> mu_a = filter_valid(xa, h, w, g);
    const std::vector<double> mu_b = filter_valid(xb, h, w, g);
    const std::vector<double> e_aa = filter_valid(aa, h, w, g);
    const std::vector<double> e_bb = filter_valid(bb, h, w, g);
    const std::vector<double> e_ab = filter_valid(ab, h, w, g);

    const double c1 = (0.01 * dynamic_range) * (0.01 * dynamic_range);
    const double c2 = (0.03 * dynamic_range) * (0.03 * dynamic_range);
    double acc = 0.0;
    for (size_t i = 0; i < mu_a.size(); ++i) {
        const double ma = mu_a[i], mb = mu_b[i];
        const double va = e_aa[i] - ma * ma;
        const double vb = e_bb[i] - mb * mb;
        const double cov = e_ab[i] - ma * mb;
        acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
               ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    return acc / static_cast<double>(mu_a.size());
}

MetricReport aggregate(const std::string& metric, const std::vector<double>& values) {
    if (values.empty()) throw DataError("no values to aggregate for " + metric);
    MetricReport r;
    r.metric = metric;
    r.values = values;
    r.mean = std::accumulate(values.begin(), values.end(), 0.0) /
             static_cast<double>(values.size());
    if (values.size() > 1) {
        double acc = 0.0;
        for (double v : values) acc += (v - r.mean) * (v - r.mean);
        r.std_dev = std::sqrt(acc / static_cast<double>(values.size() - 1));
    }
    return r;
}

std::string format_mean_std(double mean, double std_dev, int decimals) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%.*f ± %.*f", decimals, mean, decimals, std_dev);
    return buf;
}

namespace {

std::string format_value(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    return buf;
}

void require_consistent(const MetricTable& t) {
    for (const MetricReport& c : t.columns)
        if (c.values.size() != t.scan_ids.size())
            throw DataError("metric column " + c.metric + " has " +
                            std::to_string(c.values.size()) + " values for " +
                            std::to_string(t.scan_ids.size()) + " scans");
}

}  // namespace

std::string to_csv(const MetricTable& table) {
    require_consistent(table);
    std::string out = "scan";
    for (const MetricReport& c : table.columns) out += "," + c.metric;
    out += "\n";
    for (size_t i = 0; i < table.scan_ids.size(); ++i) {
        out += table.scan_ids[i];
        for (const MetricReport& c : table.columns) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), ",%.9g", c.values[i]);
            out += buf;
        }
        out += "\n";
    }
    out += "mean";
    for (const MetricReport& c : table.columns) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), ",%.9g", c.mean);
        out += buf;
    }
    out += "\nstd";
    for (const MetricReport& c : table.columns) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), ",%.9g", c.std_dev);
        out += buf;
    }
    out += "\n";
    return out;
}

std::string to_text(const MetricTable& table, int decimals) {
    require_consistent(table);
    std::vector<std::vector<std::string>> cells;
    std::vector<std::string> header{"scan"};
    for (const MetricReport& c : table.columns) header.push_back(c.metric);
    cells.push_back(header);
    for (size_t i = 0; i < table.scan_ids.size(); ++i) {
        std::vector<std::string> row{table.scan_ids[i]};
        for (const MetricReport& c : table.columns)
            row.push_back(format_value(c.values[i], decimals));
        cells.push_back(row);
    }
    std::vector<std::string> footer{"mean ± std"};
    for (const MetricReport& c : table.columns)
        footer.push_back(format_mean_std(c.mean, c.std_dev, decimals));
    cells.push_back(footer);

    std::vector<size_t> widths(cells[0].size(), 0);
    for (const auto& row : cells)
        for (size_t j = 0; j < row.size(); ++j) widths[j] = std::max(widths[j], row[j].size());
    std::string out;
    for (const auto& row : cells) {
        for (size_t j = 0; j < row.size(); ++j) {
            std::string cell = row[j];
            cell.resize(widths[j] + (j + 1 < row.size() ? 2 : 0), ' ');
            out += cell;
        }
        while (!out.empty() && out.back() == ' ') out.pop_back();
        out += "\n";
    }
    return out;
}

}  // namespace cstn
