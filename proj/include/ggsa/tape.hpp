#pragma once

#include <cstdint>
#include <functional>
#include <unordered_set>
#include <vector>

#include "ggsa/tensor.hpp"

namespace ggsa::ad {

// Primitive kinds. The set is exactly what the fixed architectures and the
// loss expressions need.
enum class Op {
    Add,
    Sub,
    Mul,
    Scale,
    MatMul,
    Conv2d,
    ConvTranspose2d,
    Relu,
    Sigmoid,
    Exp,
    Log,
    Square,
    Sum,
    Mean,
    Reshape,
    ConcatChannels,
    MaxPool2d,
    UpsampleNearest2d,
};

const char* op_name(Op op);

struct OpAttrs {
    double scalar = 0.0;   // Scale multiplier
    int stride = 1;        // Conv2d / ConvTranspose2d
    int padding = 0;       // Conv2d / ConvTranspose2d
    int kernel = 2;        // MaxPool2d window (stride == window)
    int factor = 2;        // UpsampleNearest2d
    Shape target_shape;    // Reshape
};

// Ordered record of primitive applications. Entries are appended in forward
// order, so every operand precedes its consumer and one reverse sweep visits
// each application exactly once.
class Tape {
public:
    struct Entry {
        Op op;
        OpAttrs attrs;
        std::vector<TensorPtr> inputs;
        TensorPtr output;
        std::vector<std::int64_t> saved; // op context (e.g. pooling argmax)
    };

    void record(Entry entry);
    bool produced(const Tensor* t) const { return outputs_.count(t) != 0; }
    const std::vector<Entry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    void clear();

private:
    std::vector<Entry> entries_;
    std::unordered_set<const Tensor*> outputs_;
};

// Makes a tape the active recording target for the current thread.
class TapeScope {
public:
    explicit TapeScope(Tape& tape);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* previous_;
};

Tape* active_tape();

// Applies a primitive, recording it on the active tape when any input
// requires a gradient. Output requires_grad is the OR over inputs.
TensorPtr apply_primitive(Op op, const std::vector<TensorPtr>& inputs,
                          const OpAttrs& attrs = {});

// Reverse sweep. `loss` must be a scalar produced on `tape`. Afterwards every
// requires_grad tensor touched by the tape has a populated grad buffer;
// tensors that do not influence the loss end with zero grad.
void backward(Tape& tape, const TensorPtr& loss);

// Max relative error between the analytic gradient of f at x and central
// finite differences with step h. f must be deterministic and scalar-valued.
double grad_check(const std::function<TensorPtr(const TensorPtr&)>& f,
                  const TensorPtr& x, double h);

} // namespace ggsa::ad
