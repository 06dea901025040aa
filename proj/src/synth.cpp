#include "specfid/synth.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "specfid/errors.hpp"
#include "specfid/spectral.hpp"

namespace specfid {

void ZipfEnsemble::validate() const {
    if (!(alpha > 1.0) || !std::isfinite(alpha)) {
        throw DomainError("Zipf exponent alpha must exceed 1 (got " + std::to_string(alpha) + ")");
    }
    if (V < 1) throw DomainError("vocabulary size V must be >= 1");
    if (d < 1) throw DomainError("embedding dimension d must be >= 1");
    if (N < 1) throw DomainError("sample count N must be >= 1");
}

void to_json(nlohmann::json& j, const ZipfEnsemble& e) {
    j = nlohmann::json{{"V", e.V}, {"alpha", e.alpha}, {"d", e.d}, {"N", e.N}, {"seed", e.seed}};
}

void from_json(const nlohmann::json& j, ZipfEnsemble& e) {
    if (!j.is_object()) throw ConfigError("ensemble must be a JSON object");
    ZipfEnsemble out;
    if (j.contains("V")) out.V = j.at("V").get<std::size_t>();
    if (j.contains("alpha")) out.alpha = j.at("alpha").get<double>();
    if (j.contains("d")) out.d = j.at("d").get<std::size_t>();
    if (j.contains("N")) out.N = j.at("N").get<std::size_t>();
    if (j.contains("seed")) out.seed = j.at("seed").get<std::uint64_t>();
    out.validate();
    e = out;
}

std::vector<double> zipf_probabilities(std::size_t V, double alpha) {
    if (!(alpha > 1.0)) {
        throw DomainError("Zipf exponent alpha must exceed 1 (got " + std::to_string(alpha) + ")");
    }
    if (V < 1) throw DomainError("vocabulary size must be >= 1");
    std::vector<double> p(V);
    for (std::size_t k = 0; k < V; ++k) p[k] = std::pow(static_cast<double>(k + 1), -alpha);
    // Smallest terms first.
    double total = 0.0;
    for (std::size_t k = V; k-- > 0;) total += p[k];
    for (double& v : p) v /= total;
    return p;
}

DenseMatrix random_unit_embeddings(std::size_t V, std::size_t d, RandomStream& rng) {
    if (V < 1 || d < 1) throw DomainError("random_unit_embeddings: V and d must be >= 1");
    std::vector<double> out(d * V);
    std::vector<double> col(d);
    for (std::size_t k = 0; k < V; ++k) {
        double norm_sq = 0.0;
        do {
            rng.fill_normal(col);
            norm_sq = 0.0;
            for (double x : col) norm_sq += x * x;
        } while (norm_sq == 0.0);
        const double inv = (col[0] < 0.0 ? -1.0 : 1.0) / std::sqrt(norm_sq);
        for (std::size_t i = 0; i < d; ++i) out[i * V + k] = col[i] * inv;
        if (d == 1) out[k] = 1.0;
    }
    return DenseMatrix(d, V, std::move(out));
}

EmbeddingTable make_embedding_table(const ZipfEnsemble& ens, RandomStream& rng) {
    ens.validate();
    return EmbeddingTable{random_unit_embeddings(ens.V, ens.d, rng),
                          zipf_probabilities(ens.V, ens.alpha)};
}

DenseMatrix population_covariance(const EmbeddingTable& table) {
    const auto v = table.vectors.view();
    if (static_cast<std::size_t>(v.cols()) != table.probs.size()) {
        throw ShapeError("population_covariance: probability count does not match vectors");
    }
    const Eigen::Map<const Eigen::VectorXd> p(table.probs.data(),
                                              static_cast<Eigen::Index>(table.probs.size()));
    const Eigen::MatrixXd weighted = v * p.asDiagonal();
    Eigen::MatrixXd sigma = weighted * v.transpose();
    sigma = 0.5 * (sigma + sigma.transpose()).eval();
    return DenseMatrix(sigma);
}

std::vector<std::uint32_t> sample_tokens(std::span<const double> probs, std::size_t N,
                                         RandomStream& rng) {
    if (probs.empty()) throw DomainError("sample_tokens: empty probability vector");
    std::vector<double> cdf(probs.size());
    double acc = 0.0;
    for (std::size_t k = 0; k < probs.size(); ++k) {
        acc += probs[k];
        cdf[k] = acc;
    }
    cdf.back() = 1.0;
    std::vector<std::uint32_t> out(N);
    for (auto& t : out) {
        const double u = rng.uniform();
        const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        const auto idx = std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()),
                                               cdf.size() - 1);
        t = static_cast<std::uint32_t>(idx + 1);
    }
    return out;
}

EmbeddingSample sample_embedding_matrix(const ZipfEnsemble& ens) {
    ens.validate();
    RandomStream emb_rng(ens.seed, 0);
    RandomStream tok_rng(ens.seed, 1);
    EmbeddingTable table = make_embedding_table(ens, emb_rng);
    std::vector<std::uint32_t> tokens = sample_tokens(table.probs, ens.N, tok_rng);
    std::vector<double> x(ens.d * ens.N);
    for (std::size_t i = 0; i < ens.N; ++i) {
        const std::size_t k = tokens[i] - 1;
        for (std::size_t r = 0; r < ens.d; ++r) x[r * ens.N + i] = table.vectors(r, k);
    }
    DenseMatrix X(ens.d, ens.N, std::move(x));
    return EmbeddingSample{std::move(table), std::move(tokens), std::move(X)};
}

DenseMatrix build_embedding_matrix(const ZipfEnsemble& ens) {
    return std::move(sample_embedding_matrix(ens).X);
}

DenseMatrix synthetic_output_gradient(std::size_t n_rows, std::size_t n_cols, double M,
                                      RandomStream& rng) {
    if (!(M > 0.0) || !std::isfinite(M)) throw DomainError("gradient bound M must be > 0");
    if (n_rows < 1 || n_cols < 1) throw ShapeError("gradient dimensions must be positive");
    Eigen::MatrixXd g(static_cast<Eigen::Index>(n_rows), static_cast<Eigen::Index>(n_cols));
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
        for (Eigen::Index j = 0; j < g.cols(); ++j) g(i, j) = rng.normal();
    }
    const double norm = singular_values(g).front();
    g *= M / norm;
    return DenseMatrix(g);
}

DenseMatrix weight_gradient(const DenseMatrix& X, const DenseMatrix& G) { return multiply(X, G); }

Eigen::MatrixXd random_orthogonal(std::size_t n, RandomStream& rng) {
    const auto dim = static_cast<Eigen::Index>(n);
    Eigen::MatrixXd g(dim, dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
        for (Eigen::Index j = 0; j < dim; ++j) g(i, j) = rng.normal();
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ();
    const Eigen::MatrixXd& r = qr.matrixQR();
    for (Eigen::Index j = 0; j < dim; ++j) {
        if (r(j, j) < 0.0) q.col(j) *= -1.0;
    }
    return q;
}

DenseMatrix prescribed_spectrum_matrix(std::size_t m, std::size_t n,
                                       std::span<const double> sigma, RandomStream& rng) {
    const std::size_t k = std::min(m, n);
    if (sigma.size() != k) {
        throw ShapeError("prescribed spectrum needs min(m, n) = " + std::to_string(k) + " values");
    }
    const Eigen::MatrixXd u = random_orthogonal(m, rng);
    const Eigen::MatrixXd w = random_orthogonal(n, rng);
    const auto kk = static_cast<Eigen::Index>(k);
    const Eigen::Map<const Eigen::VectorXd> s(sigma.data(), kk);
    const Eigen::MatrixXd a = (u.leftCols(kk) * s.asDiagonal()) * w.leftCols(kk).transpose();
    return DenseMatrix(a);
}

std::vector<double> power_law_spectrum(std::size_t count, double mu, double alpha,
                                       std::size_t head_rank) {
    if (!(mu > 0.0)) throw DomainError("power_law_spectrum: mu must be > 0");
    if (head_rank < 1) throw DomainError("power_law_spectrum: head rank must be >= 1");
    std::vector<double> s(count);
    for (std::size_t k = 1; k <= count; ++k) {
        const double kk = static_cast<double>(std::min(k, head_rank));
        s[k - 1] = mu * std::pow(kk, -alpha / 2.0);
    }
    return s;
}

}  // namespace specfid
