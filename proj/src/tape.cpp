#include "paml/tape.hpp"

#include <cmath>
#include <utility>

namespace paml::diff {

namespace {

enum class Op {
    Param,
    Const,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Exp,
    Log,
    Tanh,
    Sigmoid,
    LeakyRelu,
    ClampMin,
    MatMul,
    Transpose,
    Reshape,
    Hcat,
    Vcat,
    DiagEmbed,
    Sum,
    RowSum,
    ColSum,
    CholSolve,
    LogDet,
};

const char* op_name(Op op) {
    switch (op) {
        case Op::Param: return "param";
        case Op::Const: return "const";
        case Op::Add: return "add";
        case Op::Sub: return "sub";
        case Op::Mul: return "mul";
        case Op::Div: return "div";
        case Op::Neg: return "neg";
        case Op::Exp: return "exp";
        case Op::Log: return "log";
        case Op::Tanh: return "tanh";
        case Op::Sigmoid: return "sigmoid";
        case Op::LeakyRelu: return "leaky_relu";
        case Op::ClampMin: return "clamp_min";
        case Op::MatMul: return "matmul";
        case Op::Transpose: return "transpose";
        case Op::Reshape: return "reshape";
        case Op::Hcat: return "hcat";
        case Op::Vcat: return "vcat";
        case Op::DiagEmbed: return "diag_embed";
        case Op::Sum: return "sum";
        case Op::RowSum: return "row_sum";
        case Op::ColSum: return "col_sum";
        case Op::CholSolve: return "chol_solve";
        case Op::LogDet: return "logdet_spd";
    }
    return "?";
}

enum class Bcast { Full, Scalar, Col, Row };

Bcast broadcast_kind(Index ar, Index ac, Index br, Index bc) {
    if (ar == br && ac == bc) return Bcast::Full;
    if (br == 1 && bc == 1) return Bcast::Scalar;
    if (br == ar && bc == 1) return Bcast::Col;
    if (br == 1 && bc == ac) return Bcast::Row;
    throw std::invalid_argument("tape: shapes (" + std::to_string(ar) + "x" + std::to_string(ac) +
                                ") and (" + std::to_string(br) + "x" + std::to_string(bc) +
                                ") are not broadcast-compatible");
}

// Expand the right operand to the full result shape.
Matrix expand(const Matrix& b, Bcast kind, Index rows, Index cols) {
    switch (kind) {
        case Bcast::Full: return b;
        case Bcast::Scalar: return Matrix::Constant(rows, cols, b(0, 0));
        case Bcast::Col: return b.replicate(1, cols);
        case Bcast::Row: return b.replicate(rows, 1);
    }
    return b;
}

constexpr double kJitterStart = 1e-6;
constexpr double kJitterMax = 1e-2;

}  // namespace

struct Tape::Node {
    Op op = Op::Const;
    int a = -1;
    int b = -1;
    std::vector<int> rest;  // vcat tail inputs
    Index rows = 0, cols = 0;
    double aux = 0.0;  // leaky slope / clamp floor
    Bcast bcast = Bcast::Full;
    Matrix val;
    Matrix adj;
    bool bound = false;
    bool has_val = false;
    // Cached factorization of sym(input) + jitter I for CholSolve / LogDet.
    std::unique_ptr<Eigen::LLT<Matrix>> llt;
    double jitter = 0.0;

    void factor_spd(const Matrix& A);
};

// Factor sym(A) + jitter I, doubling jitter on failure. Symmetrizing keeps
// the primitive's value and gradient consistent under entrywise perturbation.
void Tape::Node::factor_spd(const Matrix& A) {
    double j = kJitterStart;
    Matrix base = 0.5 * (A + A.transpose());
    while (true) {
        Matrix J = base;
        J.diagonal().array() += j;
        if (!llt) llt = std::make_unique<Eigen::LLT<Matrix>>();
        llt->compute(J);
        if (llt->info() == Eigen::Success && llt->matrixLLT().diagonal().minCoeff() > 0.0) {
            jitter = j;
            return;
        }
        j *= 2.0;
        if (j > kJitterMax)
            throw numerical_error("cholesky failed after jitter ladder (max 1e-2)");
    }
}

struct Tape::Impl {
    std::vector<Node> nodes;
    bool forward_clean = false;

    Node& at(Var v) {
        if (v.id < 0 || v.id >= static_cast<int>(nodes.size()))
            throw std::invalid_argument("tape: invalid var handle");
        return nodes[static_cast<std::size_t>(v.id)];
    }
    const Node& at(Var v) const {
        if (v.id < 0 || v.id >= static_cast<int>(nodes.size()))
            throw std::invalid_argument("tape: invalid var handle");
        return nodes[static_cast<std::size_t>(v.id)];
    }

    Var push(Node&& n) {
        nodes.push_back(std::move(n));
        forward_clean = false;
        return Var{static_cast<int>(nodes.size()) - 1};
    }

    Var unary(Op op, Var a, double aux = 0.0) {
        const Node& na = at(a);
        Node n;
        n.op = op;
        n.a = a.id;
        n.rows = na.rows;
        n.cols = na.cols;
        n.aux = aux;
        return push(std::move(n));
    }

    Var binary_elementwise(Op op, Var a, Var b) {
        const Node& na = at(a);
        const Node& nb = at(b);
        Node n;
        n.op = op;
        n.a = a.id;
        n.b = b.id;
        n.bcast = broadcast_kind(na.rows, na.cols, nb.rows, nb.cols);
        n.rows = na.rows;
        n.cols = na.cols;
        return push(std::move(n));
    }
};

Tape::Tape() : impl_(std::make_unique<Impl>()) {}
Tape::Tape(Tape&&) noexcept = default;
Tape& Tape::operator=(Tape&&) noexcept = default;
Tape::~Tape() = default;

std::size_t Tape::size() const { return impl_->nodes.size(); }

Var Tape::parameter(const Matrix& value) {
    Node n;
    n.op = Op::Param;
    n.rows = value.rows();
    n.cols = value.cols();
    n.val = value;
    n.bound = true;
    return impl_->push(std::move(n));
}

Var Tape::parameter(Index rows, Index cols) {
    Node n;
    n.op = Op::Param;
    n.rows = rows;
    n.cols = cols;
    return impl_->push(std::move(n));
}

Var Tape::constant(const Matrix& value) {
    Node n;
    n.op = Op::Const;
    n.rows = value.rows();
    n.cols = value.cols();
    n.val = value;
    n.bound = true;
    return impl_->push(std::move(n));
}

Var Tape::scalar(double value) { return constant(Matrix::Constant(1, 1, value)); }

void Tape::set_value(Var leaf, const Matrix& value) {
    Node& n = impl_->at(leaf);
    if (n.op != Op::Param && n.op != Op::Const)
        throw std::invalid_argument("tape: set_value on a non-leaf node");
    if (value.rows() != n.rows || value.cols() != n.cols)
        throw std::invalid_argument("tape: set_value shape mismatch");
    n.val = value;
    n.bound = true;
    impl_->forward_clean = false;
}

Var Tape::add(Var a, Var b) { return impl_->binary_elementwise(Op::Add, a, b); }
Var Tape::sub(Var a, Var b) { return impl_->binary_elementwise(Op::Sub, a, b); }
Var Tape::mul(Var a, Var b) { return impl_->binary_elementwise(Op::Mul, a, b); }
Var Tape::div(Var a, Var b) { return impl_->binary_elementwise(Op::Div, a, b); }

Var Tape::neg(Var a) { return impl_->unary(Op::Neg, a); }
Var Tape::exp(Var a) { return impl_->unary(Op::Exp, a); }
Var Tape::log(Var a) { return impl_->unary(Op::Log, a); }
Var Tape::tanh(Var a) { return impl_->unary(Op::Tanh, a); }
Var Tape::sigmoid(Var a) { return impl_->unary(Op::Sigmoid, a); }
Var Tape::leaky_relu(Var a, double slope) { return impl_->unary(Op::LeakyRelu, a, slope); }
Var Tape::clamp_min(Var a, double floor) { return impl_->unary(Op::ClampMin, a, floor); }

Var Tape::matmul(Var a, Var b) {
    const Node& na = impl_->at(a);
    const Node& nb = impl_->at(b);
    if (na.cols != nb.rows)
        throw std::invalid_argument("tape: matmul inner dimensions disagree");
    Node n;
    n.op = Op::MatMul;
    n.a = a.id;
    n.b = b.id;
    n.rows = na.rows;
    n.cols = nb.cols;
    return impl_->push(std::move(n));
}

Var Tape::transpose(Var a) {
    const Node& na = impl_->at(a);
    Node n;
    n.op = Op::Transpose;
    n.a = a.id;
    n.rows = na.cols;
    n.cols = na.rows;
    return impl_->push(std::move(n));
}

Var Tape::reshape(Var a, Index rows, Index cols) {
    const Node& na = impl_->at(a);
    if (na.rows * na.cols != rows * cols)
        throw std::invalid_argument("tape: reshape element count mismatch");
    Node n;
    n.op = Op::Reshape;
    n.a = a.id;
    n.rows = rows;
    n.cols = cols;
    return impl_->push(std::move(n));
}

Var Tape::hcat(Var a, Var b) {
    const Node& na = impl_->at(a);
    const Node& nb = impl_->at(b);
    if (na.rows != nb.rows) throw std::invalid_argument("tape: hcat row mismatch");
    Node n;
    n.op = Op::Hcat;
    n.a = a.id;
    n.b = b.id;
    n.rows = na.rows;
    n.cols = na.cols + nb.cols;
    return impl_->push(std::move(n));
}

Var Tape::vcat(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("tape: vcat of nothing");
    Index rows = 0;
    const Index cols = impl_->at(parts[0]).cols;
    for (Var p : parts) {
        const Node& np = impl_->at(p);
        if (np.cols != cols) throw std::invalid_argument("tape: vcat column mismatch");
        rows += np.rows;
    }
    Node n;
    n.op = Op::Vcat;
    n.a = parts[0].id;
    for (std::size_t i = 1; i < parts.size(); ++i) n.rest.push_back(parts[i].id);
    n.rows = rows;
    n.cols = cols;
    return impl_->push(std::move(n));
}

Var Tape::diag_embed(Var a) {
    const Node& na = impl_->at(a);
    if (na.cols != 1) throw std::invalid_argument("tape: diag_embed expects a column");
    Node n;
    n.op = Op::DiagEmbed;
    n.a = a.id;
    n.rows = na.rows;
    n.cols = na.rows;
    return impl_->push(std::move(n));
}

Var Tape::sum(Var a) {
    impl_->at(a);
    Node n;
    n.op = Op::Sum;
    n.a = a.id;
    n.rows = 1;
    n.cols = 1;
    return impl_->push(std::move(n));
}

Var Tape::row_sum(Var a) {
    const Node& na = impl_->at(a);
    Node n;
    n.op = Op::RowSum;
    n.a = a.id;
    n.rows = na.rows;
    n.cols = 1;
    return impl_->push(std::move(n));
}

Var Tape::col_sum(Var a) {
    const Node& na = impl_->at(a);
    Node n;
    n.op = Op::ColSum;
    n.a = a.id;
    n.rows = 1;
    n.cols = na.cols;
    return impl_->push(std::move(n));
}

Var Tape::chol_solve(Var spd, Var rhs) {
    const Node& ns = impl_->at(spd);
    const Node& nr = impl_->at(rhs);
    if (ns.rows != ns.cols) throw std::invalid_argument("tape: chol_solve needs a square matrix");
    if (ns.cols != nr.rows) throw std::invalid_argument("tape: chol_solve rhs row mismatch");
    Node n;
    n.op = Op::CholSolve;
    n.a = spd.id;
    n.b = rhs.id;
    n.rows = nr.rows;
    n.cols = nr.cols;
    return impl_->push(std::move(n));
}

Var Tape::logdet_spd(Var spd) {
    const Node& ns = impl_->at(spd);
    if (ns.rows != ns.cols) throw std::invalid_argument("tape: logdet_spd needs a square matrix");
    Node n;
    n.op = Op::LogDet;
    n.a = spd.id;
    n.rows = 1;
    n.cols = 1;
    return impl_->push(std::move(n));
}

double Tape::evaluate(Var out) {
    auto& nodes = impl_->nodes;
    {
        const Node& no = impl_->at(out);
        if (no.rows != 1 || no.cols != 1)
            throw std::invalid_argument("tape: evaluate output must be a scalar");
    }
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        Node& n = nodes[i];
        switch (n.op) {
            case Op::Param:
                if (!n.bound) throw std::logic_error("tape: unbound parameter at evaluate");
                break;
            case Op::Const:
                break;
            case Op::Add: {
                const Matrix& a = nodes[n.a].val;
                const Matrix& b = nodes[n.b].val;
                n.val = (n.bcast == Bcast::Full) ? Matrix(a + b)
                                                 : Matrix(a + expand(b, n.bcast, n.rows, n.cols));
                break;
            }
            case Op::Sub: {
                const Matrix& a = nodes[n.a].val;
                const Matrix& b = nodes[n.b].val;
                n.val = (n.bcast == Bcast::Full) ? Matrix(a - b)
                                                 : Matrix(a - expand(b, n.bcast, n.rows, n.cols));
                break;
            }
            case Op::Mul: {
                const Matrix& a = nodes[n.a].val;
                const Matrix& b = nodes[n.b].val;
                n.val = (n.bcast == Bcast::Full)
                            ? Matrix(a.cwiseProduct(b))
                            : Matrix(a.cwiseProduct(expand(b, n.bcast, n.rows, n.cols)));
                break;
            }
            case Op::Div: {
                const Matrix& a = nodes[n.a].val;
                const Matrix& b = nodes[n.b].val;
                n.val = (n.bcast == Bcast::Full)
                            ? Matrix(a.cwiseQuotient(b))
                            : Matrix(a.cwiseQuotient(expand(b, n.bcast, n.rows, n.cols)));
                break;
            }
            case Op::Neg:
                n.val = -nodes[n.a].val;
                break;
            case Op::Exp:
                n.val = nodes[n.a].val.array().exp();
                break;
            case Op::Log:
                n.val = nodes[n.a].val.array().log();
                break;
            case Op::Tanh:
                n.val = nodes[n.a].val.array().tanh();
                break;
            case Op::Sigmoid:
                n.val = 1.0 / (1.0 + (-nodes[n.a].val.array()).exp());
                break;
            case Op::LeakyRelu: {
                Eigen::ArrayXXd a = nodes[n.a].val.array();
                n.val = (a > 0.0).select(a, n.aux * a).matrix();
                break;
            }
            case Op::ClampMin:
                n.val = nodes[n.a].val.cwiseMax(n.aux);
                break;
            case Op::MatMul:
                n.val.noalias() = nodes[n.a].val * nodes[n.b].val;
                break;
            case Op::Transpose:
                n.val = nodes[n.a].val.transpose();
                break;
            case Op::Reshape: {
                // Row-major reinterpretation regardless of Eigen's storage.
                using RowMajor =
                    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
                RowMajor tmp = nodes[n.a].val;
                n.val = Eigen::Map<RowMajor>(tmp.data(), n.rows, n.cols);
                break;
            }
            case Op::Hcat:
                n.val.resize(n.rows, n.cols);
                n.val.leftCols(nodes[n.a].cols) = nodes[n.a].val;
                n.val.rightCols(nodes[n.b].cols) = nodes[n.b].val;
                break;
            case Op::Vcat: {
                n.val.resize(n.rows, n.cols);
                Index r = 0;
                auto place = [&](int id) {
                    n.val.middleRows(r, nodes[id].rows) = nodes[id].val;
                    r += nodes[id].rows;
                };
                place(n.a);
                for (int id : n.rest) place(id);
                break;
            }
            case Op::DiagEmbed:
                n.val = Matrix::Zero(n.rows, n.cols);
                n.val.diagonal() = nodes[n.a].val.col(0);
                break;
            case Op::Sum:
                n.val = Matrix::Constant(1, 1, nodes[n.a].val.sum());
                break;
            case Op::RowSum:
                n.val = nodes[n.a].val.rowwise().sum();
                break;
            case Op::ColSum:
                n.val = nodes[n.a].val.colwise().sum();
                break;
            case Op::CholSolve:
                n.factor_spd(nodes[n.a].val);
                n.val = n.llt->solve(nodes[n.b].val);
                break;
            case Op::LogDet:
                n.factor_spd(nodes[n.a].val);
                n.val = Matrix::Constant(
                    1, 1, 2.0 * n.llt->matrixLLT().diagonal().array().log().sum());
                break;
        }
        n.has_val = true;
        if (n.op != Op::Param && n.op != Op::Const && !n.val.allFinite())
            throw numerical_error(std::string("tape: non-finite value in '") + op_name(n.op) +
                                  "'");
    }
    impl_->forward_clean = true;
    return impl_->at(out).val(0, 0);
}

void Tape::backward(Var out) {
    auto& nodes = impl_->nodes;
    {
        const Node& no = impl_->at(out);
        if (!impl_->forward_clean || !no.has_val)
            throw std::logic_error("tape: backward before forward");
        if (no.rows != 1 || no.cols != 1)
            throw std::invalid_argument("tape: backward output must be a scalar");
    }

    for (Node& n : nodes) n.adj = Matrix::Zero(n.rows, n.cols);
    nodes[static_cast<std::size_t>(out.id)].adj(0, 0) = 1.0;

    for (int i = out.id; i >= 0; --i) {
        Node& n = nodes[static_cast<std::size_t>(i)];
        if (n.op == Op::Param || n.op == Op::Const) continue;
        if (n.adj.isZero(0.0)) continue;
        const Matrix& g = n.adj;
        switch (n.op) {
            case Op::Param:
            case Op::Const:
                break;
            case Op::Add:
                nodes[n.a].adj += g;
                if (n.bcast == Bcast::Full)
                    nodes[n.b].adj += g;
                else if (n.bcast == Bcast::Scalar)
                    nodes[n.b].adj(0, 0) += g.sum();
                else if (n.bcast == Bcast::Col)
                    nodes[n.b].adj += g.rowwise().sum();
                else
                    nodes[n.b].adj += g.colwise().sum();
                break;
            case Op::Sub:
                nodes[n.a].adj += g;
                if (n.bcast == Bcast::Full)
                    nodes[n.b].adj -= g;
                else if (n.bcast == Bcast::Scalar)
                    nodes[n.b].adj(0, 0) -= g.sum();
                else if (n.bcast == Bcast::Col)
                    nodes[n.b].adj -= g.rowwise().sum();
                else
                    nodes[n.b].adj -= g.colwise().sum();
                break;
            case Op::Mul: {
                if (n.bcast == Bcast::Full) {
                    nodes[n.a].adj += g.cwiseProduct(nodes[n.b].val);
                    nodes[n.b].adj += g.cwiseProduct(nodes[n.a].val);
                } else {
                    Matrix be = expand(nodes[n.b].val, n.bcast, n.rows, n.cols);
                    nodes[n.a].adj += g.cwiseProduct(be);
                    Matrix gb = g.cwiseProduct(nodes[n.a].val);
                    if (n.bcast == Bcast::Scalar)
                        nodes[n.b].adj(0, 0) += gb.sum();
                    else if (n.bcast == Bcast::Col)
                        nodes[n.b].adj += gb.rowwise().sum();
                    else
                        nodes[n.b].adj += gb.colwise().sum();
                }
                break;
            }
            case Op::Div: {
                Matrix be = expand(nodes[n.b].val, n.bcast, n.rows, n.cols);
                nodes[n.a].adj += g.cwiseQuotient(be);
                Matrix gb = -g.cwiseProduct(nodes[n.a].val).cwiseQuotient(be.cwiseProduct(be));
                if (n.bcast == Bcast::Full)
                    nodes[n.b].adj += gb;
                else if (n.bcast == Bcast::Scalar)
                    nodes[n.b].adj(0, 0) += gb.sum();
                else if (n.bcast == Bcast::Col)
                    nodes[n.b].adj += gb.rowwise().sum();
                else
                    nodes[n.b].adj += gb.colwise().sum();
                break;
            }
            case Op::Neg:
                nodes[n.a].adj -= g;
                break;
            case Op::Exp:
                nodes[n.a].adj += g.cwiseProduct(n.val);
                break;
            case Op::Log:
                nodes[n.a].adj += g.cwiseQuotient(nodes[n.a].val);
                break;
            case Op::Tanh:
                nodes[n.a].adj.array() += g.array() * (1.0 - n.val.array().square());
                break;
            case Op::Sigmoid:
                nodes[n.a].adj.array() += g.array() * n.val.array() * (1.0 - n.val.array());
                break;
            case Op::LeakyRelu:
                nodes[n.a].adj.array() +=
                    g.array() *
                    (nodes[n.a].val.array() > 0.0)
                        .select(Eigen::ArrayXXd::Ones(n.rows, n.cols),
                                Eigen::ArrayXXd::Constant(n.rows, n.cols, n.aux));
                break;
            case Op::ClampMin:
                nodes[n.a].adj.array() +=
                    g.array() * (nodes[n.a].val.array() > n.aux).cast<double>();
                break;
            case Op::MatMul:
                nodes[n.a].adj.noalias() += g * nodes[n.b].val.transpose();
                nodes[n.b].adj.noalias() += nodes[n.a].val.transpose() * g;
                break;
            case Op::Transpose:
                nodes[n.a].adj += g.transpose();
                break;
            case Op::Reshape: {
                using RowMajor =
                    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
                RowMajor tmp = g;
                nodes[n.a].adj +=
                    Eigen::Map<RowMajor>(tmp.data(), nodes[n.a].rows, nodes[n.a].cols);
                break;
            }
            case Op::Hcat:
                nodes[n.a].adj += g.leftCols(nodes[n.a].cols);
                nodes[n.b].adj += g.rightCols(nodes[n.b].cols);
                break;
            case Op::Vcat: {
                Index r = 0;
                auto take = [&](int id) {
                    nodes[id].adj += g.middleRows(r, nodes[id].rows);
                    r += nodes[id].rows;
                };
                take(n.a);
                for (int id : n.rest) take(id);
                break;
            }
            case Op::DiagEmbed:
                nodes[n.a].adj += g.diagonal();
                break;
            case Op::Sum:
                nodes[n.a].adj.array() += g(0, 0);
                break;
            case Op::RowSum:
                nodes[n.a].adj += g.replicate(1, nodes[n.a].cols);
                break;
            case Op::ColSum:
                nodes[n.a].adj += g.replicate(nodes[n.a].rows, 1);
                break;
            case Op::CholSolve: {
                // X = K^{-1} B:  dB = K^{-1} G,  dK = -sym((K^{-1} G) X^T).
                Matrix kg = n.llt->solve(g);
                nodes[n.b].adj += kg;
                Matrix gk = kg * n.val.transpose();
                nodes[n.a].adj -= 0.5 * (gk + gk.transpose());
                break;
            }
            case Op::LogDet: {
                const Index m = nodes[n.a].rows;
                Matrix kinv = n.llt->solve(Matrix::Identity(m, m));
                nodes[n.a].adj += g(0, 0) * 0.5 * (kinv + kinv.transpose());
                break;
            }
        }
    }
}

const Matrix& Tape::value(Var v) const {
    const Node& n = impl_->at(v);
    if (!n.has_val && !n.bound) throw std::logic_error("tape: value read before evaluate");
    return n.val;
}

const Matrix& Tape::gradient(Var leaf) const {
    const Node& n = impl_->at(leaf);
    if (n.adj.size() == 0) throw std::logic_error("tape: gradient read before backward");
    return n.adj;
}

}  // namespace paml::diff
