#include "ggsa/tape.hpp"

#include <cmath>

#include "backward_entry.hpp"

namespace ggsa::ad {

namespace {
thread_local Tape* g_active_tape = nullptr;
}

void Tape::record(Entry entry) {
    outputs_.insert(entry.output.get());
    entries_.push_back(std::move(entry));
}

void Tape::clear() {
    entries_.clear();
    outputs_.clear();
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

Tape* active_tape() { return g_active_tape; }

void backward(Tape& tape, const TensorPtr& loss) {
    if (!loss->is_scalar()) {
        fail(ErrorKind::Contract,
             "backward needs a scalar loss, got shape " + shape_str(loss->shape));
    }
    if (!tape.produced(loss.get())) {
        fail(ErrorKind::StaleTape, "loss tensor was not produced on this tape");
    }

    // Fresh zeroed buffers for everything the tape touches.
    for (const auto& e : tape.entries()) {
        for (const auto& t : e.inputs) t->grad.assign(t->values.size(), 0.0);
        e.output->grad.assign(e.output->values.size(), 0.0);
    }
    loss->grad[0] = 1.0;

    const auto& entries = tape.entries();
    for (auto it = entries.rbegin(); it != entries.rend(); ++it) {
        backward_entry(*it);
    }
}

double grad_check(const std::function<TensorPtr(const TensorPtr&)>& f,
                  const TensorPtr& x, double h) {
    if (!(h > 0.0)) fail(ErrorKind::Contract, "grad_check step h must be positive");

    // Analytic gradient through the tape.
    Tape tape;
    TensorPtr probe = Tensor::make(x->shape, x->values, true);
    TensorPtr loss;
    {
        TapeScope scope(tape);
        loss = f(probe);
    }
    if (!loss->is_scalar()) {
        fail(ErrorKind::Contract, "grad_check needs a scalar-valued function");
    }
    backward(tape, loss);
    std::vector<double> analytic = probe->has_grad()
                                       ? probe->grad
                                       : std::vector<double>(x->values.size(), 0.0);

    // Central differences, evaluated off-tape.
    double worst = 0.0;
    for (std::size_t i = 0; i < x->values.size(); ++i) {
        auto lo = x->values;
        auto hi = x->values;
        lo[i] -= h;
        hi[i] += h;
        const double f_hi = f(Tensor::make(x->shape, std::move(hi)))->item();
        const double f_lo = f(Tensor::make(x->shape, std::move(lo)))->item();
        const double numeric = (f_hi - f_lo) / (2.0 * h);
        const double denom =
            std::max({std::fabs(analytic[i]), std::fabs(numeric), 1e-12});
        worst = std::max(worst, std::fabs(analytic[i] - numeric) / denom);
    }
    return worst;
}

} // namespace ggsa::ad
