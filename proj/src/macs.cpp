#include "focustrack/macs.hpp"

namespace focustrack {

namespace {

using u64 = std::uint64_t;

u64 linear(u64 rows, u64 in, u64 out) { return rows * in * out; }

// One cross-attention layer: q over nq rows, k/v over nk rows, output projection.
u64 cross_attention(u64 nq, u64 nk, u64 d) {
    return linear(nq, d, d) + 2 * linear(nk, d, d) + 2 * nq * nk * d + linear(nq, d, d);
}

}  // namespace

MacBreakdown estimate_macs(const ModelConfig& cfg, bool baseline) {
    cfg.validate();
    const auto& e = cfg.encoder;
    const u64 c = e.embed_dim;
    const u64 nz = e.template_tokens(), nx = e.search_tokens();
    const u64 n = (baseline ? 0 : 1) + nz + nx;
    const u64 g = e.grid();

    MacBreakdown m;
    m.patch_embed = (nz + nx) * (e.channels * e.patch * e.patch) * c;
    // qkv + proj (4NC^2), two attention matmuls (2N^2C), FFN (2 * ratio * NC^2)
    m.encoder = e.layers * (4 * n * c * c + 2 * n * n * c + 2 * e.ffn_ratio * n * c * c);

    const u64 outs[3] = {1, 2, 2};
    for (u64 b = 0; b < 3; ++b) {
        u64 cin = c;
        for (u64 s = 0; s < 3; ++s) {
            const u64 cout = cfg.head.channels >> s;
            m.head += g * g * 9 * cin * cout;
            cin = cout;
        }
        m.head += g * g * cin * outs[b];
    }
    if (baseline) return m;

    m.sra = cross_attention(1, nx, c) + linear(1, c, c / 2) + linear(1, c / 2, 2);

    const auto& a = cfg.atm;
    const u64 d = a.hidden;
    for (u64 b = 0; b < a.blocks; ++b) {
        m.atm += linear(nx, c, d);
        for (u64 l = 0; l < a.layers_per_block; ++l) m.atm += cross_attention(1, nx, d) + 2 * linear(1, d, a.ffn_ratio * d);
    }
    m.atm += linear(1, d, 2);
    return m;
}

nlohmann::json macs_json(const MacBreakdown& m) {
    return {{"patch_embed", m.patch_embed}, {"encoder", m.encoder}, {"head", m.head},
            {"sra", m.sra},                 {"atm", m.atm},         {"total", m.total()},
            {"total_g", static_cast<double>(m.total()) / 1e9}};
}

}  // namespace focustrack
