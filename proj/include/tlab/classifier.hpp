#pragma once

// Queries shared by every differentiable two-logit classifier: prediction,
// loss gradients and the signed logit margin. Attacks and the margin booster
// are written against the Classifier concept so they run unchanged on the
// convolutional models and on closed-form linear models.

#include <algorithm>
#include <concepts>
#include <cstddef>
#include <limits>
#include <vector>

#include "ops.hpp"
#include "tensor.hpp"

namespace tlab {

template <class C>
concept Classifier = requires(const C& c, const Tensor& x) {
    { c.logits(x) } -> std::convertible_to<Tensor>;
    // Gradient of <dlogits, logits(x)> with respect to x.
    { c.input_vjp(x, x) } -> std::convertible_to<Tensor>;
};

struct Prediction {
    Tensor probabilities;
    std::size_t predicted_class = 0;
};

// argmax with ties broken toward the lower index.
inline std::size_t argmax_class(const Tensor& logits) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i) {
        if (logits[i] > logits[best]) best = i;
    }
    return best;
}

// Highest non-true logit minus the true logit; positive iff misclassified
// (up to exact ties).
inline float margin_of(const Tensor& logits, std::size_t true_class) {
    float best = -std::numeric_limits<float>::infinity();
    for (std::size_t k = 0; k < logits.size(); ++k) {
        if (k != true_class) best = std::max(best, logits[k]);
    }
    return best - logits[true_class];
}

inline std::size_t strongest_other(const Tensor& logits, std::size_t true_class) {
    std::size_t best = true_class == 0 ? 1 : 0;
    for (std::size_t k = 0; k < logits.size(); ++k) {
        if (k != true_class && logits[k] > logits[best]) best = k;
    }
    return best;
}

template <Classifier C>
Prediction predict(const C& model, const Tensor& x) {
    const Tensor z = model.logits(x);
    const auto p = ops::softmax(z);
    Prediction r;
    r.probabilities = Tensor({p.size()});
    for (std::size_t i = 0; i < p.size(); ++i) r.probabilities[i] = static_cast<float>(p[i]);
    r.predicted_class = argmax_class(z);
    return r;
}

template <Classifier C>
std::size_t predicted_class(const C& model, const Tensor& x) {
    return argmax_class(model.logits(x));
}

template <Classifier C>
bool misclassifies(const C& model, const Tensor& x, std::size_t true_class) {
    return predicted_class(model, x) != true_class;
}

// Gradient of the cross-entropy loss for class_index w.r.t. the input.
template <Classifier C>
Tensor input_gradient(const C& model, const Tensor& x, std::size_t class_index) {
    const auto lg = ops::softmax_cross_entropy(model.logits(x), class_index);
    return model.input_vjp(x, lg.logit_grad);
}

template <Classifier C>
float margin(const C& model, const Tensor& x, std::size_t true_class) {
    return margin_of(model.logits(x), true_class);
}

template <Classifier C>
Tensor margin_gradient(const C& model, const Tensor& x, std::size_t true_class) {
    const Tensor z = model.logits(x);
    Tensor d(z.shape());
    d[strongest_other(z, true_class)] = 1.0f;
    d[true_class] = -1.0f;
    return model.input_vjp(x, d);
}

// logits = W * flatten(x) + b. Used for closed-form checks.
class LinearClassifier {
public:
    LinearClassifier(Tensor weights, Tensor bias) : w_(std::move(weights)), b_(std::move(bias)) {
        if (w_.rank() != 2 || b_.size() != w_.dim(0)) throw DimensionError("LinearClassifier: bad shapes");
    }

    Tensor logits(const Tensor& x) const { return ops::dense_forward(x, w_, b_); }

    Tensor input_vjp(const Tensor& x, const Tensor& dlogits) const {
        return ops::dense_backward(x, w_, dlogits, false).input_grad;
    }

    const Tensor& weights() const noexcept { return w_; }
    const Tensor& bias() const noexcept { return b_; }

private:
    Tensor w_;
    Tensor b_;
};

} // namespace tlab
