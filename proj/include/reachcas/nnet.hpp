#pragma once

#include <cmath>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "reachcas/common.hpp"

namespace rcas {

/// One affine layer, row-major weights: out[i] = sum_j w[i*cols+j] * in[j] + b[i].
struct Layer {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> w;
    std::vector<double> b;
};

/// Feed-forward network: ReLU on every layer except the last, which is
/// affine. Inputs are normalized as (x - mean) / range before the first
/// layer; the raw output is denormalized as y * out_range + out_mean.
struct Network {
    std::vector<Layer> layers;
    std::vector<double> in_min, in_max;    // declared valid input range (raw units)
    std::vector<double> in_mean, in_range;
    double out_mean = 0.0;
    double out_range = 1.0;
    std::vector<std::string> input_names;
    std::vector<std::string> output_names;
    std::string comment;  // first line of the file, without the leading //

    std::size_t input_dim() const { return layers.front().cols; }
    std::size_t output_dim() const { return layers.back().rows; }

    void check_valid() const {
        require(!layers.empty(), "network has no layers");
        for (std::size_t i = 1; i < layers.size(); ++i)
            require(layers[i].cols == layers[i - 1].rows, "layer dimensions do not chain");
        for (const auto& l : layers) {
            require(l.w.size() == l.rows * l.cols && l.b.size() == l.rows, "layer storage mismatch");
            for (double v : l.w) require(std::isfinite(v), "non-finite weight");
            for (double v : l.b) require(std::isfinite(v), "non-finite bias");
        }
        require(in_mean.size() == input_dim() && in_range.size() == input_dim(),
                "input normalization size mismatch");
        for (double r : in_range) require(r > 0.0, "input range must be positive");
        require(out_range > 0.0, "output range must be positive");
        require(in_min.size() == input_dim() && in_max.size() == input_dim(),
                "input bound size mismatch");
    }
};

/// Exact forward evaluation in doubles.
inline std::vector<double> evaluate(const Network& net, std::span<const double> x) {
    require(x.size() == net.input_dim(), "evaluate: input dimension mismatch");
    std::vector<double> cur(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) cur[i] = (x[i] - net.in_mean[i]) / net.in_range[i];
    std::vector<double> next;
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        const Layer& l = net.layers[li];
        const bool last = li + 1 == net.layers.size();
        next.assign(l.rows, 0.0);
        for (std::size_t i = 0; i < l.rows; ++i) {
            double acc = l.b[i];
            const double* row = l.w.data() + i * l.cols;
            for (std::size_t j = 0; j < l.cols; ++j) acc += row[j] * cur[j];
            next[i] = last ? acc : std::max(0.0, acc);
        }
        cur.swap(next);
    }
    for (double& v : cur) v = v * net.out_range + net.out_mean;
    return cur;
}

// --- text format ------------------------------------------------------------
//
// line 1:  // free-form comment
// line 2:  number of weight layers
// line 3:  layer sizes, comma separated: input, hidden..., output
// line 4:  input minimums
// line 5:  input maximums
// line 6:  normalization means (one per input, then the output mean)
// line 7:  normalization ranges (one per input, then the output range)
// then per layer: one line per weight-matrix row, then one line of biases.

namespace detail {

inline std::vector<double> parse_csv_doubles(const std::string& line, const std::string& path,
                                             std::size_t lineno) {
    std::vector<double> out;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::size_t pos = 0;
        double v = 0;
        try {
            v = std::stod(tok, &pos);
        } catch (const std::exception&) {
            throw ParseError(path, lineno, "expected a number, got '" + tok + "'");
        }
        if (!std::isfinite(v)) throw ParseError(path, lineno, "non-finite value");
        out.push_back(v);
    }
    if (out.empty()) throw ParseError(path, lineno, "empty numeric line");
    return out;
}

inline std::string next_line(std::istream& is, const std::string& path, std::size_t& lineno) {
    std::string line;
    if (!std::getline(is, line)) throw ParseError(path, lineno + 1, "unexpected end of file");
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
}

inline std::string join_names(const std::vector<std::string>& names) {
    std::string s;
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (i) s += ",";
        s += names[i];
    }
    return s;
}

}  // namespace detail

inline void save_network(const Network& net, const std::string& path) {
    net.check_valid();
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << "// " << net.comment;
    if (!net.input_names.empty()) os << " inputs=" << detail::join_names(net.input_names);
    if (!net.output_names.empty()) os << " outputs=" << detail::join_names(net.output_names);
    os << "\n";
    os << net.layers.size() << "\n";
    os << net.input_dim();
    for (const auto& l : net.layers) os << "," << l.rows;
    os << "\n";
    auto write_csv = [&os](std::span<const double> v) {
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (i) os << ",";
            os << format_double(v[i]);
        }
        os << "\n";
    };
    write_csv(net.in_min);
    write_csv(net.in_max);
    std::vector<double> means = net.in_mean;
    means.push_back(net.out_mean);
    write_csv(means);
    std::vector<double> ranges = net.in_range;
    ranges.push_back(net.out_range);
    write_csv(ranges);
    for (const auto& l : net.layers) {
        for (std::size_t i = 0; i < l.rows; ++i)
            write_csv(std::span<const double>(l.w.data() + i * l.cols, l.cols));
        write_csv(l.b);
    }
    if (!os) throw std::runtime_error("write failed: " + path);
}

inline Network load_network(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open: " + path);
    std::size_t lineno = 0;
    Network net;

    std::string header = detail::next_line(is, path, lineno);
    if (header.rfind("//", 0) != 0) throw ParseError(path, lineno, "first line must be a // comment");
    net.comment = header.substr(header.find_first_not_of(" \t", 2) == std::string::npos
                                    ? 2
                                    : header.find_first_not_of(" \t", 2));
    auto grab_names = [&net](const std::string& key) {
        const auto pos = net.comment.find(key + "=");
        if (pos == std::string::npos) return std::vector<std::string>{};
        std::string rest = net.comment.substr(pos + key.size() + 1);
        rest = rest.substr(0, rest.find(' '));
        std::vector<std::string> names;
        std::stringstream ss(rest);
        std::string tok;
        while (std::getline(ss, tok, ',')) names.push_back(tok);
        return names;
    };
    net.input_names = grab_names("inputs");
    net.output_names = grab_names("outputs");
    for (const char* key : {" inputs=", " outputs="}) {
        const auto pos = net.comment.find(key);
        if (pos != std::string::npos) {
            auto end = net.comment.find(' ', pos + 1);
            net.comment.erase(pos, end == std::string::npos ? std::string::npos : end - pos);
        }
    }

    const std::string nl_line = detail::next_line(is, path, lineno);
    std::size_t num_layers = 0;
    try {
        num_layers = std::stoul(nl_line);
    } catch (const std::exception&) {
        throw ParseError(path, lineno, "expected the number of layers");
    }
    if (num_layers == 0 || num_layers > 64) throw ParseError(path, lineno, "implausible layer count");

    const std::string sizes_line = detail::next_line(is, path, lineno);
    const auto sizes_d = detail::parse_csv_doubles(sizes_line, path, lineno);
    if (sizes_d.size() != num_layers + 1)
        throw ParseError(path, lineno, "layer size list does not match layer count");
    std::vector<std::size_t> sizes;
    for (double v : sizes_d) {
        if (v < 1 || v != std::floor(v)) throw ParseError(path, lineno, "bad layer size");
        sizes.push_back(static_cast<std::size_t>(v));
    }

    auto read_vec = [&](std::size_t expect, const char* what) {
        const std::string line = detail::next_line(is, path, lineno);
        auto v = detail::parse_csv_doubles(line, path, lineno);
        if (v.size() != expect)
            throw ParseError(path, lineno, std::string("expected ") + std::to_string(expect) + " " + what);
        return v;
    };

    const std::size_t n_in = sizes.front();
    net.in_min = read_vec(n_in, "input minimums");
    net.in_max = read_vec(n_in, "input maximums");
    auto means = read_vec(n_in + 1, "normalization means");
    auto ranges = read_vec(n_in + 1, "normalization ranges");
    net.out_mean = means.back();
    means.pop_back();
    net.in_mean = std::move(means);
    net.out_range = ranges.back();
    ranges.pop_back();
    net.in_range = std::move(ranges);

    for (std::size_t li = 0; li < num_layers; ++li) {
        Layer l;
        l.cols = sizes[li];
        l.rows = sizes[li + 1];
        l.w.reserve(l.rows * l.cols);
        for (std::size_t r = 0; r < l.rows; ++r) {
            auto row = read_vec(l.cols, "weights");
            l.w.insert(l.w.end(), row.begin(), row.end());
        }
        l.b = read_vec(l.rows, "biases");
        net.layers.push_back(std::move(l));
    }
    try {
        net.check_valid();
    } catch (const ContractError& e) {
        throw ParseError(path + ": " + e.what());
    }
    return net;
}

}  // namespace rcas
