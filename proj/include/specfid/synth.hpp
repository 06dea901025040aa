#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "specfid/matrix.hpp"
#include "specfid/random.hpp"

namespace specfid {

/// Synthetic corpus: V tokens with Zipf(alpha) frequencies, d-dimensional
/// embeddings, N sampled tokens.
struct ZipfEnsemble {
    std::size_t V = 1024;
    double alpha = 1.5;
    std::size_t d = 256;
    std::size_t N = 2048;
    std::uint64_t seed = 42;

    /// DomainError when alpha <= 1 or any count is zero. V = 1 is accepted
    /// (a single-token corpus).
    void validate() const;

    friend bool operator==(const ZipfEnsemble&, const ZipfEnsemble&) = default;
};

void to_json(nlohmann::json& j, const ZipfEnsemble& e);
void from_json(const nlohmann::json& j, ZipfEnsemble& e);

struct EmbeddingTable {
    DenseMatrix vectors;        // d x V, column k is the unit vector v_k
    std::vector<double> probs;  // p_k, strictly decreasing, sums to 1
};

/// p_k = k^-alpha / sum_{j<=V} j^-alpha. DomainError unless alpha > 1 and V >= 1.
std::vector<double> zipf_probabilities(std::size_t V, double alpha);

/// d x V matrix of independent Gaussian directions normalised to unit length.
/// Each column is oriented so its first coordinate is non-negative; for d = 1
/// every column is exactly +1.
DenseMatrix random_unit_embeddings(std::size_t V, std::size_t d, RandomStream& rng);

EmbeddingTable make_embedding_table(const ZipfEnsemble& ens, RandomStream& rng);

/// Sigma = sum_k p_k v_k v_k^T (d x d, symmetric PSD).
DenseMatrix population_covariance(const EmbeddingTable& table);

/// N i.i.d. token ranks in [1, V] by inverse CDF on the cumulative probabilities.
std::vector<std::uint32_t> sample_tokens(std::span<const double> probs, std::size_t N,
                                         RandomStream& rng);

/// Embedding table, sampled ranks and X (d x N, column i = v_{t_i}).
struct EmbeddingSample {
    EmbeddingTable table;
    std::vector<std::uint32_t> tokens;
    DenseMatrix X;
};

/// Streams used: (seed, 0) for the embeddings, (seed, 1) for the tokens.
EmbeddingSample sample_embedding_matrix(const ZipfEnsemble& ens);
DenseMatrix build_embedding_matrix(const ZipfEnsemble& ens);

/// Gaussian n_rows x n_cols matrix rescaled so its spectral norm is M.
DenseMatrix synthetic_output_gradient(std::size_t n_rows, std::size_t n_cols, double M,
                                      RandomStream& rng);

/// Weight gradient as the product X * G (X is d x N, G is N x p).
DenseMatrix weight_gradient(const DenseMatrix& X, const DenseMatrix& G);

/// Haar-distributed n x n orthogonal matrix (QR of a Gaussian matrix with the
/// signs of R's diagonal folded into Q).
Eigen::MatrixXd random_orthogonal(std::size_t n, RandomStream& rng);

/// m x n matrix U diag(sigma) W^T with Haar U, W; sigma has min(m, n) entries.
DenseMatrix prescribed_spectrum_matrix(std::size_t m, std::size_t n,
                                       std::span<const double> sigma, RandomStream& rng);

/// sigma_k = mu * k^(-alpha/2) for k <= head_rank, flat at mu * r^(-alpha/2)
/// afterwards. head_rank >= count gives the pure power law.
std::vector<double> power_law_spectrum(std::size_t count, double mu, double alpha,
                                       std::size_t head_rank);

}  // namespace specfid
