#include "epinn/tape.hpp"

#include <cmath>

namespace epinn {

namespace {

bool is_unary(Op op) {
    switch (op) {
        case Op::Neg:
        case Op::AddC:
        case Op::RSubC:
        case Op::MulC:
        case Op::RDivC:
        case Op::Tanh:
        case Op::Exp:
        case Op::Log:
        case Op::Sin:
        case Op::Cos:
        case Op::Sqrt:
        case Op::Square:
        case Op::Softplus:
        case Op::Sigmoid:
            return true;
        default:
            return false;
    }
}

bool is_binary(Op op) {
    switch (op) {
        case Op::Add:
        case Op::Sub:
        case Op::Mul:
        case Op::Div:
            return true;
        default:
            return false;
    }
}

} // namespace

double Tape::eval_node(const Node& n) const {
    auto va = [&] { return nodes_[n.a].val; };
    auto vb = [&] { return nodes_[n.b].val; };
    switch (n.op) {
        case Op::Leaf:
        case Op::Const:
            return n.val;
        case Op::Add: return va() + vb();
        case Op::Sub: return va() - vb();
        case Op::Mul: return va() * vb();
        case Op::Div: return va() / vb();
        case Op::Neg: return -va();
        case Op::AddC: return va() + n.aux;
        case Op::RSubC: return n.aux - va();
        case Op::MulC: return va() * n.aux;
        case Op::RDivC: return n.aux / va();
        case Op::Tanh: return std::tanh(va());
        case Op::Exp: return std::exp(va());
        case Op::Log: return std::log(va());
        case Op::Sin: return std::sin(va());
        case Op::Cos: return std::cos(va());
        case Op::Sqrt: return std::sqrt(va());
        case Op::Square: return va() * va();
        case Op::Softplus: return softplus(va());
        case Op::Sigmoid: return sigmoid(va());
    }
    throw ContractError("Tape: unknown op kind");
}

Var Tape::apply(Op op, Var a, Var b, double aux) {
    if (op == Op::Leaf || op == Op::Const)
        throw ContractError("Tape::apply: Leaf/Const are created via leaf()/constant()");
    if (!a.valid() || a.tape != this)
        throw ContractError("Tape::apply: first operand is not on this tape");
    Node n{op, a.idx, -1, 0.0, aux};
    if (is_binary(op)) {
        if (!b.valid() || b.tape != this)
            throw ContractError("Tape::apply: second operand is not on this tape");
        n.b = b.idx;
    } else if (!is_unary(op)) {
        throw ContractError("Tape::apply: unsupported op kind");
    }
    n.val = eval_node(n);
    nodes_.push_back(n);
    return {this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

void Tape::set_leaf(Var v, double x) {
    if (!v.valid() || v.tape != this)
        throw ContractError("Tape::set_leaf: handle is not on this tape");
    if (nodes_[v.idx].op != Op::Leaf)
        throw ContractError("Tape::set_leaf: node is not a leaf");
    nodes_[v.idx].val = x;
}

void Tape::reevaluate() {
    for (Node& n : nodes_)
        if (n.op != Op::Leaf && n.op != Op::Const) n.val = eval_node(n);
}

void Tape::backward(Var root) {
    if (!root.valid() || root.tape != this)
        throw ContractError("Tape::backward: root is not on this tape");
    adjoint_.assign(nodes_.size(), 0.0);
    adjoint_[root.idx] = 1.0;
    for (std::int32_t i = root.idx; i >= 0; --i) {
        const Node& n = nodes_[i];
        const double g = adjoint_[i];
        if (g == 0.0) continue;
        switch (n.op) {
            case Op::Leaf:
            case Op::Const:
                break;
            case Op::Add:
                adjoint_[n.a] += g;
                adjoint_[n.b] += g;
                break;
            case Op::Sub:
                adjoint_[n.a] += g;
                adjoint_[n.b] -= g;
                break;
            case Op::Mul:
                adjoint_[n.a] += g * nodes_[n.b].val;
                adjoint_[n.b] += g * nodes_[n.a].val;
                break;
            case Op::Div: {
                const double inv_b = 1.0 / nodes_[n.b].val;
                adjoint_[n.a] += g * inv_b;
                adjoint_[n.b] -= g * n.val * inv_b;
                break;
            }
            case Op::Neg:
                adjoint_[n.a] -= g;
                break;
            case Op::AddC:
                adjoint_[n.a] += g;
                break;
            case Op::RSubC:
                adjoint_[n.a] -= g;
                break;
            case Op::MulC:
                adjoint_[n.a] += g * n.aux;
                break;
            case Op::RDivC:
                adjoint_[n.a] -= g * n.val / nodes_[n.a].val;
                break;
            case Op::Tanh:
                adjoint_[n.a] += g * (1.0 - n.val * n.val);
                break;
            case Op::Exp:
                adjoint_[n.a] += g * n.val;
                break;
            case Op::Log:
                adjoint_[n.a] += g / nodes_[n.a].val;
                break;
            case Op::Sin:
                adjoint_[n.a] += g * std::cos(nodes_[n.a].val);
                break;
            case Op::Cos:
                adjoint_[n.a] -= g * std::sin(nodes_[n.a].val);
                break;
            case Op::Sqrt:
                adjoint_[n.a] += g * 0.5 / n.val;
                break;
            case Op::Square:
                adjoint_[n.a] += g * 2.0 * nodes_[n.a].val;
                break;
            case Op::Softplus:
                adjoint_[n.a] += g * sigmoid(nodes_[n.a].val);
                break;
            case Op::Sigmoid:
                adjoint_[n.a] += g * n.val * (1.0 - n.val);
                break;
        }
    }
}

namespace {
Var unary(Var a, Op op, double aux = 0.0) {
    if (!a.valid()) throw ContractError("Tape op on invalid Var");
    return a.tape->apply(op, a, {}, aux);
}
Var binary(Var a, Var b, Op op) {
    if (!a.valid() || !b.valid()) throw ContractError("Tape op on invalid Var");
    if (a.tape != b.tape) throw ContractError("Tape op across different tapes");
    return a.tape->apply(op, a, b);
}
} // namespace

Var operator+(Var a, Var b) { return binary(a, b, Op::Add); }
Var operator-(Var a, Var b) { return binary(a, b, Op::Sub); }
Var operator*(Var a, Var b) { return binary(a, b, Op::Mul); }
Var operator/(Var a, Var b) { return binary(a, b, Op::Div); }
Var operator-(Var a) { return unary(a, Op::Neg); }

Var operator+(Var a, double c) { return unary(a, Op::AddC, c); }
Var operator+(double c, Var a) { return unary(a, Op::AddC, c); }
Var operator-(Var a, double c) { return unary(a, Op::AddC, -c); }
Var operator-(double c, Var a) { return unary(a, Op::RSubC, c); }
Var operator*(Var a, double c) { return unary(a, Op::MulC, c); }
Var operator*(double c, Var a) { return unary(a, Op::MulC, c); }
Var operator/(Var a, double c) { return unary(a, Op::MulC, 1.0 / c); }
Var operator/(double c, Var a) { return unary(a, Op::RDivC, c); }

Var tanh(Var a) { return unary(a, Op::Tanh); }
Var exp(Var a) { return unary(a, Op::Exp); }
Var log(Var a) { return unary(a, Op::Log); }
Var sin(Var a) { return unary(a, Op::Sin); }
Var cos(Var a) { return unary(a, Op::Cos); }
Var sqrt(Var a) { return unary(a, Op::Sqrt); }
Var square(Var a) { return unary(a, Op::Square); }
Var softplus(Var a) { return unary(a, Op::Softplus); }
Var sigmoid(Var a) { return unary(a, Op::Sigmoid); }

std::vector<double> grad(Tape& tape, Var root, std::span<const Var> wrt) {
    tape.backward(root);
    std::vector<double> out;
    out.reserve(wrt.size());
    for (Var v : wrt) {
        if (!v.valid() || v.tape != &tape)
            throw ContractError("grad: wrt handle is not on this tape");
        out.push_back(tape.adjoint(v));
    }
    return out;
}

} // namespace epinn
