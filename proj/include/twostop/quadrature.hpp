#ifndef TWOSTOP_QUADRATURE_HPP
#define TWOSTOP_QUADRATURE_HPP

#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <vector>

#include <boost/math/special_functions/legendre.hpp>

namespace twostop {

/// Gauss-Legendre rule on [-1, 1].
class GaussLegendre {
public:
    explicit GaussLegendre(int n)
    {
        if (n < 1)
            throw std::invalid_argument("GaussLegendre: need at least one node");
        // boost returns the nonnegative zeros in increasing order
        auto zeros = boost::math::legendre_p_zeros<double>(n);
        for (double x : zeros) {
            double dp = boost::math::legendre_p_prime(n, x);
            double w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes_.push_back(x);
            weights_.push_back(w);
            if (x != 0.0) {
                nodes_.push_back(-x);
                weights_.push_back(w);
            }
        }
    }

    std::size_t size() const { return nodes_.size(); }
    const std::vector<double>& nodes() const { return nodes_; }
    const std::vector<double>& weights() const { return weights_; }

    template <class F>
    double integrate(F&& f, double lo, double hi) const
    {
        double half = 0.5 * (hi - lo);
        double mid = 0.5 * (hi + lo);
        double sum = 0.0;
        for (std::size_t i = 0; i < nodes_.size(); ++i)
            sum += weights_[i] * f(mid + half * nodes_[i]);
        return sum * half;
    }

private:
    std::vector<double> nodes_;
    std::vector<double> weights_;
};

/// Shared, lazily built rule with n nodes.
inline const GaussLegendre& gauss_legendre(int n)
{
    static std::mutex mutex;
    static std::map<int, std::unique_ptr<GaussLegendre>> cache;
    std::lock_guard lock(mutex);
    auto& slot = cache[n];
    if (!slot)
        slot = std::make_unique<GaussLegendre>(n);
    return *slot;
}

}  // namespace twostop

#endif  // TWOSTOP_QUADRATURE_HPP
