#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

namespace nstab {

// Unit vectors a_1..a_q of the regular simplex, expressed in R^{q-1} via an
// orthonormal basis of the zero-sum hyperplane. a_i . a_j = -1/(q-1) for
// i != j. Row-major, q rows of q-1 entries.
std::vector<double> simplex_vectors(int q);

// argmax_i x . a_i with ties going to the lowest index.
int classify_by_vectors(std::span<const double> x, std::span<const double> vecs, int q,
                        int dim);

// A measurable partition of R^n into q cells, closed under the operations the
// stability estimators need: point classification, closed-form cell measures
// where available, and JSON (de)serialization. Callback partitions classify
// but do not round-trip; their JSON carries a non-serializable flag.
class GaussianPartition {
public:
    enum class Kind { halfspace_stack, simplex, box_union, callback };

    struct Box {
        std::vector<double> lo, hi;  // half-open [lo, hi); +-inf allowed
        int cell;
    };

    // Parallel slabs along axis 0 with the given cell measures (must sum to 1).
    // Cut points are normal quantiles of the cumulative measures; zero-measure
    // cells collapse to empty slabs.
    static GaussianPartition halfspace_stack(std::vector<double> measures, int n = 1);

    static GaussianPartition simplex(int q);

    // Simplex cells for caller-supplied vectors (e.g. a rotated copy). Vectors
    // must be unit with pairwise dot -1/(q-1) (InvariantError otherwise).
    static GaussianPartition simplex_with_vectors(int q, std::vector<double> vectors);

    // Cells 0..q-2 are explicit disjoint box unions; cell q-1 is the implicit
    // complement, which keeps classification total. Overlapping boxes raise
    // InvariantError at construction.
    static GaussianPartition box_union(int n, int q, std::vector<Box> boxes);

    static GaussianPartition callback(int n, int q,
                                      std::function<int(std::span<const double>)> fn,
                                      std::string label = "callback");

    int dim() const { return n_; }
    int cells() const { return q_; }
    Kind kind() const { return kind_; }
    const std::string& label() const { return label_; }

    int classify(std::span<const double> x) const;

    // Exact cell masses under the standard Gaussian. MetadataError for
    // callback partitions, whose cells have no closed form.
    std::vector<double> cell_measures() const;

    nlohmann::json to_json() const;
    static GaussianPartition from_json(const nlohmann::json& j);

private:
    struct StackData {
        std::vector<double> measures;
        std::vector<double> cuts;  // size q-1
    };
    struct SimplexData {
        std::vector<double> vectors;  // q x (q-1) row-major
    };
    struct BoxData {
        std::vector<Box> boxes;
    };
    struct CallbackData {
        std::function<int(std::span<const double>)> fn;
    };

    GaussianPartition() = default;

    Kind kind_ = Kind::callback;
    int n_ = 0;
    int q_ = 0;
    std::string label_;
    std::variant<StackData, SimplexData, BoxData, CallbackData> data_;
};

// Soft assignment of points to q cells: weights(x) lies on the probability
// simplex. Mild negative drift / normalization error is repaired on read;
// gross violations raise DomainError.
class FuzzyPartition {
public:
    FuzzyPartition(int n, int q,
                   std::function<void(std::span<const double>, std::span<double>)> weights);

    // vertex embedding of a crisp partition (one-hot weights)
    static FuzzyPartition from_partition(GaussianPartition p);

    int dim() const { return n_; }
    int cells() const { return q_; }
    void weights(std::span<const double> x, std::span<double> out) const;

private:
    int n_;
    int q_;
    std::function<void(std::span<const double>, std::span<double>)> fn_;
};

struct DefuzzifyResult {
    GaussianPartition partition;   // callback kind; classification is total
    std::vector<double> measures;  // exact in-window Gaussian cell masses
    double tail_mass;              // mass outside the cube window (argmax rule there)
};

// Rounds a fuzzy partition to a crisp one on a grid of side `delta`: inside
// each cube, cells occupy slabs along axis 0 whose conditional Gaussian
// masses equal the cube's weighted-average weight vector, so expectations are
// preserved up to the cube-averaging error. With `targets`, a greedy mass
// transfer across cubes makes the global cell masses hit the targets exactly
// (within the window). Supports n <= 3; finer grids than ~2^23 cubes raise
// ScaleError.
DefuzzifyResult defuzzify(const FuzzyPartition& g, double delta,
                          const std::vector<double>* targets = nullptr);

}  // namespace nstab
