#include "sketchlab/blockcheck.hpp"

#include <cmath>

#include "sketchlab/gradcheck.hpp"
#include "sketchlab/rng.hpp"
#include "sketchlab/tensor.hpp"

namespace sketchlab {

namespace {

using TD = TensorT<double>;

TD rparam(Rng& rng, Shape s, double sd = 0.5) {
    std::vector<double> v(size_t(numel(s)));
    for (auto& x : v) x = rng.normal() * sd;
    return TD::param(std::move(s), std::move(v));
}

template <typename F>
BlockCheck run_one(const std::string& name, std::vector<NamedParamD> params, F&& loss,
                   double tol = 1e-4) {
    BlockCheck c;
    c.name = name;
    c.tol = tol;
    auto rep = grad_check(std::move(params), std::forward<F>(loss));
    c.max_rel_err = rep.max_rel_err;
    c.worst_param = rep.worst_param;
    c.pass = rep.passes(tol);
    return c;
}

} // namespace

std::vector<BlockCheck> run_block_gradchecks(uint64_t seed, bool inject_bug) {
    std::vector<BlockCheck> out;
    Rng rng(seed);

    {
        auto a = rparam(rng, {3, 4});
        auto b = rparam(rng, {3, 4});
        auto bias = rparam(rng, {4});
        out.push_back(run_one("elementwise-broadcast", {{"a", a}, {"b", b}, {"bias", bias}},
                              [&] {
                                  return sum_all(mul(add_bias(mul(a, b), bias), a));
                              }));
    }
    {
        auto x = rparam(rng, {5, 6});
        auto W = rparam(rng, {6, 3});
        auto b = rparam(rng, {3});
        out.push_back(run_one("linear", {{"x", x}, {"W", W}, {"b", b}}, [&] {
            auto y = linear(x, W, b);
            return sum_all(mul(y, y));
        }));
    }
    {
        auto p = rparam(rng, {2, 3, 4});
        auto q = rparam(rng, {2, 4, 3});
        out.push_back(run_one("batched-matmul", {{"p", p}, {"q", q}},
                              [&] { return sum_all(gelu(bmm(p, q))); }));
    }
    {
        auto x = rparam(rng, {4, 5});
        out.push_back(
            run_one("gelu", {{"x", x}}, [&] { return sum_all(mul(gelu(x), x)); }));
    }
    {
        auto x = rparam(rng, {3, 6}, 1.5);
        out.push_back(run_one("softmax", {{"x", x}},
                              [&] { return sum_all(mul(softmax_lastdim(x), x)); }));
    }
    {
        auto x = rparam(rng, {4, 8}, 2.0);
        auto g = rparam(rng, {8});
        auto b = rparam(rng, {8});
        out.push_back(run_one("layer-norm", {{"x", x}, {"g", g}, {"b", b}}, [&] {
            auto y = layer_norm(x, g, b);
            return sum_all(mul(y, y));
        }));
    }
    {
        auto x = rparam(rng, {2, 4, 6});
        out.push_back(run_one("head-split-merge", {{"x", x}}, [&] {
            return sum_all(mul(merge_heads(split_heads(x, 3)), x));
        }));
    }
    {
        auto a = rparam(rng, {2, 2, 3});
        auto b = rparam(rng, {2, 3, 3});
        out.push_back(run_one("concat-slice-reshape", {{"a", a}, {"b", b}}, [&] {
            auto sl = slice_axis1(concat_axis1(a, b), 1, 3);
            auto r = reshape(sl, {6, 3});
            return sum_all(mul(r, r));
        }));
    }
    {
        auto tok = rparam(rng, {5});
        auto table = rparam(rng, {4, 5});
        std::vector<int> idx = {0, 2, 2, 1, 3, 0};
        out.push_back(run_one("token-and-table-lookup", {{"tok", tok}, {"table", table}}, [&] {
            auto e = expand_token(tok, 2, 3);
            auto g = gather_rows(table, idx, {2, 3});
            auto s = add(e, g);
            return sum_all(mul(s, s));
        }));
    }
    {
        auto x = rparam(rng, {2, 4, 3});
        std::vector<uint8_t> mask = {1, 1, 0, 0, 1, 1, 1, 0};
        out.push_back(run_one("masked-mean-pool", {{"x", x}}, [&] {
            auto pooled = masked_mean_pool(x, mask);
            return sum_all(mul(pooled, pooled));
        }));
    }
    {
        auto logits = rparam(rng, {6, 4}, 1.5);
        std::vector<int> targets = {0, 1, 2, 3, 1, 2};
        std::vector<double> w = {1, 1, 0, 1, 1, 0};
        out.push_back(run_one("cross-entropy", {{"logits", logits}},
                              [&] { return cross_entropy_mean(logits, targets, w); }));
    }
    {
        auto pred = rparam(rng, {5, 2});
        std::vector<double> tgt(10);
        for (auto& v : tgt) v = rng.normal();
        std::vector<uint8_t> m = {1, 0, 1, 1, 0};
        out.push_back(run_one("masked-mse", {{"pred", pred}},
                              [&] { return masked_mse(pred, tgt, m); }));
    }
    {
        const int B = 2, L = 4, d = 8;
        auto x = rparam(rng, {B, L, d});
        auto Wq = rparam(rng, {d, d}), Wk = rparam(rng, {d, d}), Wv = rparam(rng, {d, d});
        auto Wo = rparam(rng, {d, d});
        std::vector<uint8_t> live = {1, 1, 1, 0, 1, 1, 0, 0};
        auto mask = AttentionMask::causal_padding(live, B, L);
        out.push_back(run_one(
            "causal-masked-self-attention",
            {{"x", x}, {"Wq", Wq}, {"Wk", Wk}, {"Wv", Wv}, {"Wo", Wo}}, [&] {
                auto attn =
                    multi_head_attention(linear(x, Wq), linear(x, Wk), linear(x, Wv), 2, mask);
                auto y = linear(attn, Wo);
                return sum_all(mul(y, y));
            }));
    }
    {
        // pooled length-1 memory, decoder-style cross-attention
        const int B = 2, L = 3, d = 6;
        auto x = rparam(rng, {B, L, d});
        auto mem = rparam(rng, {B, 1, d});
        auto Wq = rparam(rng, {d, d}), Wk = rparam(rng, {d, d}), Wv = rparam(rng, {d, d});
        out.push_back(run_one("cross-attention",
                              {{"x", x}, {"mem", mem}, {"Wq", Wq}, {"Wk", Wk}, {"Wv", Wv}},
                              [&] {
                                  auto attn = multi_head_attention(
                                      linear(x, Wq), linear(mem, Wk), linear(mem, Wv), 2,
                                      AttentionMask());
                                  return sum_all(mul(attn, attn));
                              }));
    }
    {
        // pre-LN transformer block, the encoder/decoder building unit
        const int B = 2, L = 4, d = 8;
        auto x = rparam(rng, {B, L, d});
        auto Wq = rparam(rng, {d, d}), Wk = rparam(rng, {d, d}), Wv = rparam(rng, {d, d});
        auto Wo = rparam(rng, {d, d});
        auto g1 = rparam(rng, {d}), b1 = rparam(rng, {d});
        auto g2 = rparam(rng, {d}), b2 = rparam(rng, {d});
        auto W1 = rparam(rng, {d, 2 * d}), c1 = rparam(rng, {2 * d});
        auto W2 = rparam(rng, {2 * d, d}), c2 = rparam(rng, {d});
        std::vector<uint8_t> live = {1, 1, 1, 1, 1, 1, 1, 0};
        auto mask = AttentionMask::padding(live, B, L);
        out.push_back(run_one(
            "transformer-block-pooled",
            {{"x", x}, {"Wq", Wq}, {"Wk", Wk}, {"Wv", Wv}, {"Wo", Wo}, {"g1", g1},
             {"b1", b1}, {"g2", g2}, {"b2", b2}, {"W1", W1}, {"c1", c1}, {"W2", W2},
             {"c2", c2}},
            [&] {
                auto h = layer_norm(x, g1, b1);
                auto attn =
                    multi_head_attention(linear(h, Wq), linear(h, Wk), linear(h, Wv), 2, mask);
                auto y = add(x, linear(attn, Wo));
                auto f = linear(gelu(linear(layer_norm(y, g2, b2), W1, c1)), W2, c2);
                auto pooled = masked_mean_pool(add(y, f), live);
                return sum_all(mul(pooled, pooled));
            }));
    }

    if (inject_bug) {
        auto x = rparam(rng, {3});
        auto buggy_square = [](const TD& in) {
            std::vector<double> v = in.value();
            for (auto& t : v) t = t * t;
            auto node = std::make_shared<NodeT<double>>();
            node->shape = in.shape();
            node->value = std::move(v);
            node->requires_grad = true;
            node->parents = {in.n};
            NodeT<double>* self = node.get();
            auto parent = in.n;
            node->backward = [parent, self] {
                for (size_t i = 0; i < self->grad.size(); ++i)
                    parent->grad[i] += -2.0 * parent->value[i] * self->grad[i];
            };
            return TD(node);
        };
        out.push_back(run_one("injected-sign-flip", {{"x", x}},
                              [&] { return sum_all(buggy_square(x)); }));
    }
    return out;
}

} // namespace sketchlab
