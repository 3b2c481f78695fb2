#pragma once

#include <string>
#include <vector>

#include "cstn/tensor.hpp"

namespace cstn {

double mse(const Tensor& a, const Tensor& b);
double mae(const Tensor& a, const Tensor& b);

/// Structural similarity with the canonical parameters: 11x11 Gaussian window
/// (sigma 1.5), K1=0.01, K2=0.03, averaged over fully-inside window positions.
double ssim(const Tensor& a, const Tensor& b, double dynamic_range);

struct MetricReport {
    std::string metric;
    std::vector<double> values;
    double mean = 0.0;
    double std_dev = 0.0;  // sample standard deviation, n-1 denominator
};

MetricReport aggregate(const std::string& metric, const std::vector<double>& values);

/// "91.16 ± 2.89" style rendering with a fixed decimal count.
std::string format_mean_std(double mean, double std_dev, int decimals);

/// Per-scan rows with a mean ± std footer; every column holds one value per
/// scan id.
struct MetricTable {
    std::vector<std::string> scan_ids;
    std::vector<MetricReport> columns;
};

std::string to_csv(const MetricTable& table);
std::string to_text(const MetricTable& table, int decimals = 4);

}  // namespace cstn
