#include "snps3/loss_kernels.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>

#include "jsonl.hpp"
#include "snps3/hash.hpp"
#include "snps3/rng.hpp"

namespace snps3 {
namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    for (std::size_t k = 0; k < x.size(); ++k) y[k] += alpha * x[k];
}

double log_sum_exp(std::span<const double> xs) {
    const double m = *std::max_element(xs.begin(), xs.end());
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : xs) s += std::exp(x - m);
    return m + std::log(s);
}

void require_finite(const std::vector<double>& data, const char* what) {
    for (double x : data) {
        if (!std::isfinite(x)) throw ArgumentError(std::string(what) + " contains a non-finite value");
    }
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

double gelu(double x) { return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x))); }

double gelu_grad(double x) {
    const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
}

}  // namespace

LossResult masked_ce(const Matrix64& logits, std::span<const TokenId> labels) {
    const std::size_t q = logits.rows();
    const std::size_t v = logits.cols();
    if (q == 0) throw ArgumentError("masked_ce: empty masked token set");
    if (labels.size() != q) throw ArgumentError("masked_ce: one label per logits row required");
    require_finite(logits.data(), "logits");

    LossResult out;
    Matrix64 grad(q, v);
    const double inv_q = 1.0 / static_cast<double>(q);
    double total = 0.0;
    for (std::size_t r = 0; r < q; ++r) {
        const TokenId y = labels[r];
        if (y < 0 || static_cast<std::size_t>(y) >= v) throw ArgumentError("masked_ce: label out of range");
        const auto row = logits.row(r);
        const double lse = log_sum_exp(row);
        total += lse - row[static_cast<std::size_t>(y)];
        auto g = grad.row(r);
        for (std::size_t c = 0; c < v; ++c) g[c] = std::exp(row[c] - lse) * inv_q;
        g[static_cast<std::size_t>(y)] -= inv_q;
    }
    out.value = total * inv_q;
    out.grads.push_back(std::move(grad));
    return out;
}

LossResult gvtm_free(const Matrix64& vis, const Matrix64& txt_cls, double scale) {
    const std::size_t b = vis.rows();
    const std::size_t d = vis.cols();
    if (b == 0) throw ArgumentError("gvtm_free: empty batch");
    if (txt_cls.rows() != b || txt_cls.cols() != d) throw ArgumentError("gvtm_free: vis and txt_cls shapes differ");
    require_finite(vis.data(), "vis");
    require_finite(txt_cls.data(), "txt_cls");

    LossResult out;
    Matrix64 d_vis(b, d);
    Matrix64 d_txt(b, d);
    std::vector<double> logits(b);
    double total = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        const auto t = txt_cls.row(i);
        for (std::size_t j = 0; j < b; ++j) logits[j] = scale * dot(vis.row(j), t);
        const double lse = log_sum_exp(logits);
        total += lse - logits[i];
        for (std::size_t j = 0; j < b; ++j) {
            const double g = std::exp(logits[j] - lse) - (j == i ? 1.0 : 0.0);
            if (g == 0.0) continue;
            axpy(scale * g, t, d_vis.row(j));
            axpy(scale * g, vis.row(j), d_txt.row(i));
        }
    }
    out.value = total;
    out.grads.push_back(std::move(d_vis));
    out.grads.push_back(std::move(d_txt));
    return out;
}

LossResult gvtm_scored(const Matrix64& scores) {
    const std::size_t b = scores.rows();
    if (b == 0 || scores.cols() != b) throw ArgumentError("gvtm_scored: score matrix must be square and non-empty");
    require_finite(scores.data(), "scores");

    LossResult out;
    Matrix64 grad(b, b);
    std::vector<double> column(b);
    double total = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < b; ++j) column[j] = scores(j, i);
        const double lse = log_sum_exp(column);
        total += lse - column[i];
        for (std::size_t j = 0; j < b; ++j) grad(j, i) = std::exp(column[j] - lse) - (j == i ? 1.0 : 0.0);
    }
    out.value = total;
    out.grads.push_back(std::move(grad));
    return out;
}

LossResult lvwm(const Matrix64& vis, const TokenBlock64& sig_tokens, double scale) {
    const std::size_t b = vis.rows();
    const std::size_t d = vis.cols();
    const std::size_t n_l = sig_tokens.n_l();
    if (n_l == 0) throw ArgumentError("lvwm: n_l must be at least 1");
    if (b == 0) throw ArgumentError("lvwm: empty batch");
    if (sig_tokens.batch() != b || sig_tokens.dim() != d) throw ArgumentError("lvwm: vis and token shapes differ");
    require_finite(vis.data(), "vis");
    require_finite(sig_tokens.data(), "sig_tokens");

    LossResult out;
    Matrix64 d_vis(b, d);
    Matrix64 d_tok(b * n_l, d);
    // logits[j * n_l + l] = scale <v_j, t_{i,l}> for the current anchor i.
    std::vector<double> logits(b * n_l);
    std::vector<double> positives(n_l);
    double total = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < b; ++j) {
            for (std::size_t l = 0; l < n_l; ++l) logits[j * n_l + l] = scale * dot(vis.row(j), sig_tokens.token(i, l));
        }
        for (std::size_t l = 0; l < n_l; ++l) positives[l] = logits[i * n_l + l];
        const double den = log_sum_exp(logits);
        const double num = log_sum_exp(positives);
        total += den - num;
        for (std::size_t j = 0; j < b; ++j) {
            for (std::size_t l = 0; l < n_l; ++l) {
                double g = std::exp(logits[j * n_l + l] - den);
                if (j == i) g -= std::exp(positives[l] - num);
                if (g == 0.0) continue;
                axpy(scale * g, sig_tokens.token(i, l), d_vis.row(j));
                axpy(scale * g, vis.row(j), d_tok.row(i * n_l + l));
            }
        }
    }
    out.value = total;
    out.grads.push_back(std::move(d_vis));
    out.grads.push_back(std::move(d_tok));
    return out;
}

double total_loss(const std::array<std::optional<double>, 5>& terms) {
    double sum = 0.0;
    for (const auto& t : terms) {
        if (!t) continue;
        if (!std::isfinite(*t)) throw ArgumentError("total_loss: non-finite term");
        sum += *t;
    }
    return sum;
}

MlpParams MlpParams::zeros(std::size_t d, std::size_t h) {
    MlpParams p;
    p.w1 = Matrix64(d, h);
    p.b1.assign(h, 0.0);
    p.w2.assign(h, 0.0);
    return p;
}

MlpParams MlpParams::random(std::size_t d, std::size_t h, std::uint64_t seed, double stddev) {
    Rng rng(seed);
    MlpParams p = zeros(d, h);
    for (double& w : p.w1.data()) w = stddev * rng.normal();
    for (double& w : p.b1) w = stddev * rng.normal();
    for (double& w : p.w2) w = stddev * rng.normal();
    p.b2 = stddev * rng.normal();
    return p;
}

Matrix64 mlp_score(const Matrix64& pair_features, const MlpParams& params) {
    const std::size_t n = pair_features.rows();
    const std::size_t d = pair_features.cols();
    const std::size_t h = params.w1.cols();
    if (params.w1.rows() != d || params.b1.size() != h || params.w2.size() != h) {
        throw ArgumentError("mlp_score: parameter shapes do not match the feature width");
    }
    Matrix64 scores(n, 1);
    for (std::size_t r = 0; r < n; ++r) {
        const auto x = pair_features.row(r);
        double s = params.b2;
        for (std::size_t k = 0; k < h; ++k) {
            double pre = params.b1[k];
            for (std::size_t c = 0; c < d; ++c) pre += x[c] * params.w1(c, k);
            s += params.w2[k] * gelu(pre);
        }
        scores(r, 0) = s;
    }
    return scores;
}

MlpGrads mlp_score_backward(const Matrix64& pair_features, const MlpParams& params, const Matrix64& upstream) {
    const std::size_t n = pair_features.rows();
    const std::size_t d = pair_features.cols();
    const std::size_t h = params.w1.cols();
    if (params.w1.rows() != d || params.b1.size() != h || params.w2.size() != h) {
        throw ArgumentError("mlp_score_backward: parameter shapes do not match the feature width");
    }
    if (upstream.rows() != n || upstream.cols() != 1) throw ArgumentError("mlp_score_backward: upstream must be n x 1");

    MlpGrads g;
    g.input = Matrix64(n, d);
    g.w1 = Matrix64(d, h);
    g.b1.assign(h, 0.0);
    g.w2.assign(h, 0.0);
    std::vector<double> pre(h);
    for (std::size_t r = 0; r < n; ++r) {
        const auto x = pair_features.row(r);
        const double ds = upstream(r, 0);
        g.b2 += ds;
        for (std::size_t k = 0; k < h; ++k) {
            double p = params.b1[k];
            for (std::size_t c = 0; c < d; ++c) p += x[c] * params.w1(c, k);
            pre[k] = p;
        }
        auto dx = g.input.row(r);
        for (std::size_t k = 0; k < h; ++k) {
            g.w2[k] += ds * gelu(pre[k]);
            const double dh = ds * params.w2[k] * gelu_grad(pre[k]);
            g.b1[k] += dh;
            for (std::size_t c = 0; c < d; ++c) {
                g.w1(c, k) += x[c] * dh;
                dx[c] += params.w1(c, k) * dh;
            }
        }
    }
    return g;
}

GradCheckReport grad_check(const Kernel& f, std::vector<Matrix64> point, double eps) {
    if (!(eps >= 1e-6 && eps <= 1e-2)) throw ArgumentError("grad_check: eps must lie in [1e-6, 1e-2]");
    GradCheckReport report;
    const LossResult analytic = f(point);
    if (analytic.grads.size() != point.size()) throw ArgumentError("grad_check: kernel returned wrong gradient count");
    if (!std::isfinite(analytic.value)) {
        report.finite = false;
        return report;
    }
    for (std::size_t k = 0; k < point.size(); ++k) {
        if (analytic.grads[k].rows() != point[k].rows() || analytic.grads[k].cols() != point[k].cols()) {
            throw ArgumentError("grad_check: gradient shape does not match input " + std::to_string(k));
        }
        auto& x = point[k].data();
        for (std::size_t c = 0; c < x.size(); ++c) {
            const double original = x[c];
            x[c] = original + eps;
            const double plus = f(point).value;
            x[c] = original - eps;
            const double minus = f(point).value;
            x[c] = original;
            const double numeric = (plus - minus) / (2.0 * eps);
            const double exact = analytic.grads[k].data()[c];
            if (!std::isfinite(plus) || !std::isfinite(minus) || !std::isfinite(exact)) {
                report.finite = false;
                report.input = k;
                report.coordinate = c;
                return report;
            }
            const double err = std::abs(exact - numeric) / std::max(1.0, std::abs(numeric));
            if (err > report.max_rel_error) {
                report.max_rel_error = err;
                report.input = k;
                report.coordinate = c;
            }
        }
    }
    return report;
}

// Feature files ---------------------------------------------------------------

namespace {

std::string encode_f32(const std::vector<float>& values) {
    std::string bytes(values.size() * 4, '\0');
    for (std::size_t i = 0; i < values.size(); ++i) {
        const auto bits = std::bit_cast<std::uint32_t>(values[i]);
        for (int b = 0; b < 4; ++b) bytes[i * 4 + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
    }
    return bytes;
}

std::vector<float> decode_f32(const std::string& bytes) {
    std::vector<float> values(bytes.size() / 4);
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i * 4 + b])) << (8 * b);
        values[i] = std::bit_cast<float>(bits);
    }
    return values;
}

void write_features(const std::filesystem::path& path, detail::json header, const std::vector<float>& values) {
    for (float x : values) {
        if (!std::isfinite(x)) throw ArgumentError("refusing to write non-finite features to " + path.string());
    }
    const std::string payload = encode_f32(values);
    header["dtype"] = "f32";
    header["order"] = "row-major";
    header["sha256"] = content_hash(payload);
    auto out = detail::open_out(path);
    out << header.dump() << '\n';
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
}

std::pair<detail::json, std::vector<float>> read_features(const std::filesystem::path& path) {
    auto in = detail::open_in(path);
    std::string header_line;
    if (!std::getline(in, header_line)) throw FormatError(path.string() + ": missing header line");
    detail::json header;
    try {
        header = detail::json::parse(header_line);
        if (header.at("dtype").get<std::string>() != "f32") throw FormatError(path.string() + ": dtype must be f32");
        if (header.at("order").get<std::string>() != "row-major") {
            throw FormatError(path.string() + ": order must be row-major");
        }
        static_cast<void>(header.at("rows").get<std::size_t>());
        static_cast<void>(header.at("cols").get<std::size_t>());
    } catch (const detail::json::exception& e) {
        throw FormatError(path.string() + ": bad header: " + e.what());
    }
    std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (payload.size() % 4 != 0) throw FormatError(path.string() + ": payload is not a whole number of floats");
    if (header.contains("sha256") && header["sha256"].get<std::string>() != content_hash(payload)) {
        throw FormatError(path.string() + ": payload hash does not match header");
    }
    auto values = decode_f32(payload);
    for (float x : values) {
        if (!std::isfinite(x)) throw FormatError(path.string() + ": non-finite feature value");
    }
    return {std::move(header), std::move(values)};
}

}  // namespace

std::string feature_hash(const FeatureMatrix& m) { return content_hash(encode_f32(m.data())); }

void write_feature_file(const std::filesystem::path& path, const FeatureMatrix& m) {
    write_features(path, {{"rows", m.rows()}, {"cols", m.cols()}}, m.data());
}

FeatureMatrix read_feature_file(const std::filesystem::path& path) {
    auto [header, values] = read_features(path);
    if (header.contains("n_l")) throw FormatError(path.string() + ": expected a matrix, found a token block");
    const auto rows = header["rows"].get<std::size_t>();
    const auto cols = header["cols"].get<std::size_t>();
    if (values.size() != rows * cols) throw FormatError(path.string() + ": payload size does not match header shape");
    return FeatureMatrix(rows, cols, std::move(values));
}

void write_token_block_file(const std::filesystem::path& path, const TokenBlock& block) {
    write_features(path, {{"rows", block.batch()}, {"cols", block.dim()}, {"n_l", block.n_l()}}, block.data());
}

TokenBlock read_token_block_file(const std::filesystem::path& path) {
    auto [header, values] = read_features(path);
    if (!header.contains("n_l")) throw FormatError(path.string() + ": token block header needs n_l");
    std::size_t batch = 0, dim = 0, n_l = 0;
    try {
        batch = header["rows"].get<std::size_t>();
        dim = header["cols"].get<std::size_t>();
        n_l = header["n_l"].get<std::size_t>();
    } catch (const detail::json::exception& e) {
        throw FormatError(path.string() + ": bad header: " + e.what());
    }
    if (values.size() != batch * n_l * dim) throw FormatError(path.string() + ": payload size does not match header shape");
    return TokenBlock(batch, n_l, dim, std::move(values));
}

}  // namespace snps3
