#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "loralab/rng.hpp"
#include "loralab/tape.hpp"

using loralab::ErrorKind;
using loralab::grad_check;
using loralab::Rng;
using loralab::Tape;
using loralab::Tensor;

namespace {

Tensor random_tensor(loralab::Shape shape, Rng& rng, double scale = 1.0) {
    std::vector<double> data(loralab::shape_numel(shape));
    for (auto& x : data) x = rng.gaussian(0.0, scale);
    return Tensor::from_data(std::move(shape), std::move(data));
}

}  // namespace

TEST_CASE("matmul identity, hand product, annihilator") {
    Tape tape(false);
    const Tensor eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
    const Tensor x = Tensor::from_data({2, 2}, {1, 2, 3, 4});
    const Tensor y = Tensor::from_data({2, 2}, {5, 6, 7, 8});

    CHECK(tape.matmul(eye, x).data() == std::vector<double>{1, 2, 3, 4});

    const Tensor prod = tape.matmul(x, y);
    CHECK(prod.data() == std::vector<double>{19, 22, 43, 50});

    const Tensor zero = Tensor::zeros({2, 2});
    CHECK(tape.matmul(zero, x).data() == std::vector<double>(4, 0.0));
}

TEST_CASE("matmul shape mismatch names both shapes") {
    Tape tape(false);
    const Tensor a = Tensor::zeros({2, 3});
    const Tensor b = Tensor::zeros({4, 5});
    try {
        tape.matmul(a, b);
        FAIL("expected a dimension error");
    } catch (const loralab::Error& e) {
        CHECK(e.kind() == ErrorKind::input);
        CHECK(std::string(e.what()).find("[2 x 3]") != std::string::npos);
        CHECK(std::string(e.what()).find("[4 x 5]") != std::string::npos);
    }
}

TEST_CASE("sigmoid(0) = 0.5 and layer_norm of a constant row is zero") {
    Tape tape(false);
    CHECK(tape.sigmoid(Tensor::scalar(0.0)).item() == 0.5);

    const Tensor x = Tensor::from_data({1, 4}, {3.5, 3.5, 3.5, 3.5});
    const Tensor gain = Tensor::from_data({4}, {1, 1, 1, 1});
    const Tensor bias = Tensor::zeros({4});
    const Tensor normed = tape.layer_norm(x, gain, bias);
    for (double v : normed.data()) {
        CHECK(v == 0.0);
    }
}

TEST_CASE("uniform logits give ln V cross-entropy") {
    Tape tape(false);
    const std::size_t v = 8;
    const Tensor logits = Tensor::zeros({3, v});
    const std::vector<int> targets{1, 5, 7};
    const std::vector<int> mask{1, 1, 1};
    const double loss = tape.softmax_cross_entropy(logits, targets, mask).item();
    CHECK(loss == doctest::Approx(std::log(8.0)).epsilon(1e-12));
}

TEST_CASE("cross-entropy error paths: empty mask and non-finite input") {
    Tape tape(false);
    const Tensor logits = Tensor::zeros({2, 4});
    CHECK_THROWS_WITH_AS(
        tape.softmax_cross_entropy(logits, {0, 1}, {0, 0}),
        doctest::Contains("degenerate"), loralab::Error);

    Tensor bad = Tensor::zeros({2, 4});
    bad.mutable_data()[3] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_WITH_AS(tape.softmax_cross_entropy(bad, {0, 1}, {1, 1}),
                         doctest::Contains("non-finite"), loralab::Error);
}

TEST_CASE("backward: sum gives ones, identity matmul routes ones to B") {
    Rng rng(3);
    Tensor x = random_tensor({3, 3}, rng);
    x.set_requires_grad(true);
    {
        Tape tape;
        Tensor loss = tape.sum(x);
        tape.backward(loss);
        CHECK(x.grad() == std::vector<double>(9, 1.0));
    }
    x.zero_grad();

    Tensor eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
    Tensor b = random_tensor({2, 2}, rng);
    b.set_requires_grad(true);
    {
        Tape tape;
        Tensor loss = tape.sum(tape.matmul(eye, b));
        tape.backward(loss);
        CHECK(b.grad() == std::vector<double>(4, 1.0));
        CHECK_FALSE(eye.has_grad());
    }
}

TEST_CASE("second backward without reset is an error") {
    Tensor x = Tensor::from_data({2}, {1.0, 2.0});
    x.set_requires_grad(true);
    Tape tape;
    Tensor loss = tape.sum(x);
    tape.backward(loss);
    CHECK_THROWS_AS(tape.backward(loss), loralab::Error);
}

TEST_CASE("gradients accumulate additively across fan-out") {
    Tensor x = Tensor::from_data({2}, {1.5, -0.5});
    x.set_requires_grad(true);
    Tape tape;
    Tensor doubled = tape.add(x, x);
    tape.backward(tape.sum(doubled));
    CHECK(x.grad() == std::vector<double>{2.0, 2.0});
}

TEST_CASE("a detached tensor never receives gradient") {
    Rng rng(4);
    Tensor x = random_tensor({2, 2}, rng);
    x.set_requires_grad(true);
    Tensor frozen = x.detach();
    Tape tape;
    Tensor loss = tape.sum(tape.mul(x, frozen));
    tape.backward(loss);
    CHECK(x.has_grad());
    CHECK_FALSE(frozen.has_grad());
}

TEST_CASE("grad_check closed forms: sum of squares, cross entropy, constants") {
    Rng rng(9);
    const Tensor x = random_tensor({3, 3}, rng);
    const double err_sq = grad_check(
        [](Tape& t, std::vector<Tensor>& in) {
            return t.sum(t.mul(in[0], in[0]));
        },
        {x}, 1e-5);
    CHECK(err_sq < 1e-6);

    const Tensor logits = random_tensor({4, 7}, rng);
    const double err_ce = grad_check(
        [](Tape& t, std::vector<Tensor>& in) {
            return t.softmax_cross_entropy(in[0], {1, 3, 0, 6}, {1, 0, 1, 1});
        },
        {logits}, 1e-5);
    CHECK(err_ce < 1e-5);

    const double err_const = grad_check(
        [](Tape&, std::vector<Tensor>&) { return Tensor::scalar(2.5); },
        {x}, 1e-5);
    CHECK(err_const == 0.0);
}

TEST_CASE("grad_check rejects eps outside [1e-7, 1e-4]") {
    const Tensor x = Tensor::scalar(1.0);
    const auto f = [](Tape& t, std::vector<Tensor>& in) { return t.sum(in[0]); };
    CHECK_THROWS_AS(grad_check(f, {x}, 1e-2), loralab::Error);
    CHECK_THROWS_AS(grad_check(f, {x}, 1e-9), loralab::Error);
}

TEST_CASE("every op kind passes grad_check on 10 random small inputs") {
    using F = std::function<Tensor(Tape&, std::vector<Tensor>&)>;
    struct OpCase {
        std::string name;
        F f;
        std::function<std::vector<Tensor>(Rng&)> make_inputs;
    };

    const auto sum1 = [](Tape& t, const Tensor& v) { return t.sum(v); };
    std::vector<OpCase> cases = {
        {"matmul",
         [&](Tape& t, std::vector<Tensor>& in) {
             return sum1(t, t.matmul(in[0], in[1]));
         },
         [](Rng& r) {
             return std::vector<Tensor>{random_tensor({3, 4}, r),
                                        random_tensor({4, 2}, r)};
         }},
        {"matmul_nt",
         [&](Tape& t, std::vector<Tensor>& in) {
             return sum1(t, t.matmul_nt(in[0], in[1]));
         },
         [](Rng& r) {
             return std::vector<Tensor>{random_tensor({3, 4}, r),
                                        random_tensor({2, 4}, r)};
         }},
        {"add",
         [&](Tape& t, std::vector<Tensor>& in) {
             return sum1(t, t.mul(t.add(in[0], in[1]), in[0]));
         },
         [](Rng& r) {
             return std::vector<Tensor>{random_tensor({2, 3}, r),
                                        random_tensor({2, 3}, r)};
         }},
        {"sub",
         [&](Tape& t, std::vector<Tensor>& in) {
             return sum1(t, t.mul(t.sub(in[0], in[1]), in[1]));
         },
         [](Rng& r) {
             return std::vector<Tensor>{random_tensor({2, 3}, r),
                                        random_tensor({2, 3}, r)};
         }},
        {"mul",
         [&](Tape& t, std::vector<Tensor>& in) {
             return sum1(t, t.mul(in[0], in[1]));
         },
         [](Rng& r) {
             return std::vector<Tensor>{random_tensor({2, 3}, r),
                                        random_tensor({2, 3}, r)};
         }},
        {"add_rowvec",
         [&](Tape& t, std::vector<Tensor>& in) {
             return sum1(t, t.mul(t.add_rowvec(in[0], in[1]), in[0]));
         },
         [](Rng& r) {
             return std::vector<Tensor>{random_tensor({3, 4}, r),
                                        random_tensor({4}, r)};
         }},
        {"scale",
         [&](Tape& t, std::vector<Tensor>& in) {
             return sum1(t, t.mul(t.scale(in[0], -1.7), in[0]));
         },
         [](Rng& r) { return std::vector<Tensor>{random_tensor({3, 3}, r)}; }},
        {"relu",
         [&](Tape& t, std::vector<Tensor>& in) {
             return sum1(t, t.mul(t.relu(in[0]), in[0]));
         },
         [](Rng& r) { return std::vector<Tensor>{random_tensor({3, 3}, r)}; }},
        {"sigmoid",
         [&](Tape& t, std::vector<Tensor>& in) {
             return sum1(t, t.sigmoid(in[0]));
         },
         [](Rng& r) { return std::vector<Tensor>{random_tensor({3, 3}, r)}; }},
        {"log",
         [&](Tape& t, std::vector<Tensor>& in) { return sum1(t, t.log_(in[0])); },
         [](Rng& r) {
             Tensor t = random_tensor({3, 3}, r);
             for (auto& v : t.mutable_data()) v = std::abs(v) + 0.5;
             return std::vector<Tensor>{t};
         }},
        {"exp",
         [&](Tape& t, std::vector<Tensor>& in) { return sum1(t, t.exp_(in[0])); },
         [](Rng& r) { return std::vector<Tensor>{random_tensor({3, 3}, r)}; }},
        {"layer_norm",
         [&](Tape& t, std::vector<Tensor>& in) {
             return sum1(t, t.mul(t.layer_norm(in[0], in[1], in[2]), in[0]));
         },
         [](Rng& r) {
             return std::vector<Tensor>{random_tensor({3, 5}, r),
                                        random_tensor({5}, r),
                                        random_tensor({5}, r)};
         }},
        {"embedding_lookup",
         [&](Tape& t, std::vector<Tensor>& in) {
             return sum1(t, t.mul(t.embedding_lookup(in[0], {2, 0, 2}),
                                  t.embedding_lookup(in[0], {1, 1, 0})));
         },
         [](Rng& r) { return std::vector<Tensor>{random_tensor({4, 3}, r)}; }},
        {"row_slice",
         [&](Tape& t, std::vector<Tensor>& in) {
             return sum1(t, t.mul(t.row_slice(in[0], 1, 3),
                                  t.row_slice(in[0], 0, 2)));
         },
         [](Rng& r) { return std::vector<Tensor>{random_tensor({4, 3}, r)}; }},
        {"col_slice",
         [&](Tape& t, std::vector<Tensor>& in) {
             return sum1(t, t.mul(t.col_slice(in[0], 1, 3),
                                  t.col_slice(in[0], 0, 2)));
         },
         [](Rng& r) { return std::vector<Tensor>{random_tensor({3, 4}, r)}; }},
        {"concat_cols",
         [&](Tape& t, std::vector<Tensor>& in) {
             return sum1(t, t.mul(t.concat_cols({in[0], in[1]}),
                                  t.concat_cols({in[1], in[0]})));
         },
         [](Rng& r) {
             return std::vector<Tensor>{random_tensor({3, 2}, r),
                                        random_tensor({3, 2}, r)};
         }},
        {"causal_softmax",
         [&](Tape& t, std::vector<Tensor>& in) {
             return sum1(t, t.mul(t.causal_softmax(in[0]), in[0]));
         },
         [](Rng& r) { return std::vector<Tensor>{random_tensor({4, 4}, r)}; }},
        {"log_softmax",
         [&](Tape& t, std::vector<Tensor>& in) {
             return sum1(t, t.mul(t.log_softmax(in[0]), in[0]));
         },
         [](Rng& r) { return std::vector<Tensor>{random_tensor({3, 5}, r)}; }},
        {"softmax_cross_entropy",
         [&](Tape& t, std::vector<Tensor>& in) {
             return t.softmax_cross_entropy(in[0], {2, 0, 4}, {1, 1, 1});
         },
         [](Rng& r) { return std::vector<Tensor>{random_tensor({3, 5}, r)}; }},
        {"gather_pairs",
         [&](Tape& t, std::vector<Tensor>& in) {
             return sum1(t, t.gather_pairs(in[0], {0, 2, 2}, {1, 0, 3}));
         },
         [](Rng& r) { return std::vector<Tensor>{random_tensor({3, 4}, r)}; }},
        {"sum",
         [&](Tape& t, std::vector<Tensor>& in) {
             return t.sum(t.mul(in[0], in[0]));
         },
         [](Rng& r) { return std::vector<Tensor>{random_tensor({3, 3}, r)}; }},
        {"log_odds",
         [&](Tape& t, std::vector<Tensor>& in) {
             return t.log_odds(t.sum(in[0]));
         },
         [](Rng& r) {
             Tensor t = Tensor::scalar(-0.3 - 2.0 * r.uniform());
             return std::vector<Tensor>{t};
         }},
    };

    for (const auto& c : cases) {
        Rng rng(0xC0FFEE);
        double worst = 0.0;
        for (int trial = 0; trial < 10; ++trial) {
            auto inputs = c.make_inputs(rng);
            worst = std::max(worst, grad_check(c.f, inputs, 1e-5));
        }
        INFO(c.name);
        CHECK(worst < 1e-5);
    }
}

TEST_CASE("matmul associativity within 1e-12 relative Frobenius error") {
    Rng rng(21);
    for (int trial = 0; trial < 10; ++trial) {
        const Tensor a = random_tensor({4, 4}, rng);
        const Tensor b = random_tensor({4, 4}, rng);
        const Tensor c = random_tensor({4, 4}, rng);
        Tape tape(false);
        const Tensor left = tape.matmul(tape.matmul(a, b), c);
        const Tensor right = tape.matmul(a, tape.matmul(b, c));
        double diff = 0.0, norm = 0.0;
        for (std::size_t i = 0; i < left.numel(); ++i) {
            const double d = left.data()[i] - right.data()[i];
            diff += d * d;
            norm += left.data()[i] * left.data()[i];
        }
        CHECK(std::sqrt(diff) / std::sqrt(norm) < 1e-12);
    }
}

TEST_CASE("tape replay is bit-deterministic") {
    const auto run = [] {
        Rng rng(77);
        Tensor x = random_tensor({6, 6}, rng);
        Tensor w = random_tensor({6, 6}, rng);
        x.set_requires_grad(true);
        w.set_requires_grad(true);
        Tape tape;
        Tensor y = tape.causal_softmax(tape.matmul_nt(x, w));
        Tensor loss = tape.sum(tape.mul(y, x));
        tape.backward(loss);
        return std::tuple{loss.item(), x.grad(), w.grad()};
    };
    const auto [l1, gx1, gw1] = run();
    const auto [l2, gx2, gw2] = run();
    CHECK(l1 == l2);
    CHECK(gx1 == gx2);
    CHECK(gw1 == gw2);
}

TEST_CASE("backward contract errors") {
    Tape inference(false);
    Tensor x = Tensor::from_data({2}, {1.0, 2.0});
    Tensor y = inference.sum(x);
    CHECK_THROWS_AS(inference.backward(y), loralab::Error);

    Tape tape;
    Tensor v = Tensor::from_data({2}, {3.0, 4.0});
    v.set_requires_grad(true);
    Tensor nonscalar = tape.add(v, v);
    CHECK_THROWS_AS(tape.backward(nonscalar), loralab::Error);
}
