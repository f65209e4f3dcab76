#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "epinn/common.hpp"

namespace epinn {

// Reverse-mode tape. A Tape records one scalar computation as a flat,
// topologically ordered node list; backward() runs the adjoint sweep.
// A tape is confined to a single thread; reset() rewinds without
// releasing storage so it can be reused across training steps.

enum class Op : std::uint8_t {
    Leaf,
    Const,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    AddC,  // a + aux
    RSubC, // aux - a
    MulC,  // a * aux
    RDivC, // aux / a
    Tanh,
    Exp,
    Log,
    Sin,
    Cos,
    Sqrt,
    Square,
    Softplus,
    Sigmoid,
};

class Tape;

struct Var {
    Tape* tape = nullptr;
    std::int32_t idx = -1;

    bool valid() const { return tape != nullptr && idx >= 0; }
};

class Tape {
public:
    struct Node {
        Op op;
        std::int32_t a;
        std::int32_t b;
        double val;
        double aux;
    };

    Var leaf(double v) {
        nodes_.push_back({Op::Leaf, -1, -1, v, 0.0});
        return {this, static_cast<std::int32_t>(nodes_.size() - 1)};
    }

    Var constant(double v) {
        nodes_.push_back({Op::Const, -1, -1, v, 0.0});
        return {this, static_cast<std::int32_t>(nodes_.size() - 1)};
    }

    // Low-level recorder; throws on op kinds it cannot construct.
    Var apply(Op op, Var a, Var b = {}, double aux = 0.0);

    void reset() {
        nodes_.clear();
        adjoint_.clear();
    }

    std::size_t size() const { return nodes_.size(); }
    double value(Var v) const { return nodes_[v.idx].val; }
    void set_leaf(Var v, double x);

    // Recompute every node value from the current leaf values, in
    // recording order. Same leaves reproduce the same values bit-exactly.
    void reevaluate();

    // Adjoint sweep from a scalar root. Adjoints of all nodes are
    // available through adjoint() until the next backward()/reset().
    void backward(Var root);
    double adjoint(Var v) const { return adjoint_[v.idx]; }

    const Node& node(std::int32_t i) const { return nodes_[i]; }

private:
    double eval_node(const Node& n) const;

    std::vector<Node> nodes_;
    std::vector<double> adjoint_;
};

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator-(Var a);

Var operator+(Var a, double c);
Var operator+(double c, Var a);
Var operator-(Var a, double c);
Var operator-(double c, Var a);
Var operator*(Var a, double c);
Var operator*(double c, Var a);
Var operator/(Var a, double c);
Var operator/(double c, Var a);

Var tanh(Var a);
Var exp(Var a);
Var log(Var a);
Var sin(Var a);
Var cos(Var a);
Var sqrt(Var a);
Var square(Var a);
Var softplus(Var a);
Var sigmoid(Var a);

// Records `program` applied to fresh leaves holding `leaf_values`.
// Returns the root and the leaf handles; the graph stays on the tape.
template <class F>
std::pair<Var, std::vector<Var>> record_and_evaluate(Tape& tape, F&& program,
                                                     std::span<const double> leaf_values) {
    std::vector<Var> leaves;
    leaves.reserve(leaf_values.size());
    for (double v : leaf_values) leaves.push_back(tape.leaf(v));
    Var root = program(tape, std::span<const Var>(leaves));
    if (!root.valid() || root.tape != &tape)
        throw ContractError("record_and_evaluate: program did not return a scalar root on this tape");
    return {root, std::move(leaves)};
}

// Gradient of a scalar root with respect to the given leaves.
std::vector<double> grad(Tape& tape, Var root, std::span<const Var> wrt);

} // namespace epinn
