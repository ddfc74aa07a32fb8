#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gradmarket/data.hpp"

namespace gradmarket {

enum class ModelArch { logreg, mlp };

// Flattened parameter block. Layouts (all row major):
//   logreg: [W (K x d) | b (K)]
//   mlp:    [W1 (h x d) | b1 (h) | W2 (K x h) | b2 (K)], ReLU hidden layer
struct ModelParams {
  ModelArch arch = ModelArch::logreg;
  int input_dim = 0;
  int num_classes = 0;
  int hidden = 0;  // 0 for logreg
  std::vector<double> values;

  static ModelParams logreg(int input_dim, int num_classes);
  static ModelParams mlp(int input_dim, int num_classes, int hidden);
  std::size_t size() const { return values.size(); }
};

std::size_t param_count(ModelArch arch, int input_dim, int num_classes, int hidden);

// Flattened model delta (pseudo-gradient). Construction rejects non-finite
// entries so NaNs cannot propagate into aggregation.
class GradientVector {
 public:
  GradientVector() = default;
  explicit GradientVector(std::vector<double> values);
  static GradientVector zeros(std::size_t n);

  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }
  const std::vector<double>& values() const { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }

 private:
  std::vector<double> values_;
};

double dot(const GradientVector& a, const GradientVector& b);
double l2_norm(const GradientVector& a);
// Euclidean distance between two same-length vectors.
double l2_distance(const GradientVector& a, const GradientVector& b);

// flatten/unflatten round trip exactly: unflatten(p, flatten(p).values()) == p.
GradientVector flatten(const ModelParams& params);
ModelParams unflatten(const ModelParams& shape, const std::vector<double>& values);

// logreg starts at zero (convex, conventional); mlp gets Glorot-uniform
// weights and zero biases from the seed.
ModelParams init_model(ModelArch arch, int input_dim, int num_classes, int hidden,
                       std::uint64_t seed);

struct ForwardResult {
  double loss = 0.0;                // mean softmax cross entropy over the batch
  std::vector<double> logits;       // B x K row major
};

// `rows` selects the minibatch; both ops are pure in the model and data.
ForwardResult forward_loss(const ModelParams& params, const Dataset& data,
                           std::span<const std::size_t> rows);
GradientVector backward(const ModelParams& params, const Dataset& data,
                        std::span<const std::size_t> rows);

// Minibatch Adam (beta1 0.9, beta2 0.999, eps 1e-8, fresh optimiser state)
// for `epochs` passes with a seeded shuffle per epoch, trailing partial batch
// included. Returns trained-minus-start and leaves `start` untouched;
// epochs == 0 yields the zero delta.
GradientVector local_train(const ModelParams& start, const Dataset& data,
                           int epochs, int batch_size, double lr,
                           std::uint64_t seed);

// Argmax predictions (lowest index wins ties) and clean accuracy.
std::vector<int> predict(const ModelParams& params, const Dataset& data);
double accuracy(const ModelParams& params, const Dataset& data);

}  // namespace gradmarket
