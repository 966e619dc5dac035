#include "mfgp/kernel_grams.hpp"

#include "mfgp/error.hpp"

namespace mfgp::grams {

using namespace mfgp::ad;

namespace {

struct SEParts {
  Var k;
  std::vector<Var> e;    // (x_l - x_r) / l^2 per dimension
  std::vector<Var> il2;  // 1 / l^2 per dimension
};

SEParts se_parts(const SEVars& p, const Coords& xl, const Coords& xr) {
  if (xl.size() != xr.size() || static_cast<Index>(xl.size()) != p.lengthscales.rows())
    throw InvalidArgument("gram: coordinate count does not match lengthscales");
  SEParts out;
  Var il2 = reciprocal(square(p.lengthscales));
  Var r2;
  for (std::size_t a = 0; a < xl.size(); ++a) {
    Var diff = outer_diff(xl[a], xr[a]);
    Var ia = element(il2, static_cast<Index>(a));
    Var ea = scale(diff, ia);
    Var term = cwise_mul(diff, ea);
    r2 = a == 0 ? term : r2 + term;
    out.e.push_back(ea);
    out.il2.push_back(ia);
  }
  out.k = scale(exp(-0.5 * r2), p.variance);
  return out;
}

// Blocks of the SE derivative gram in row-major (d+1)^2 order.
std::vector<Var> se_grad_blocks(const SEParts& s) {
  const std::size_t d = s.e.size();
  const std::size_t k = d + 1;
  std::vector<Var> ek(d);
  for (std::size_t a = 0; a < d; ++a) ek[a] = cwise_mul(s.e[a], s.k);
  std::vector<Var> blocks(k * k);
  blocks[0] = s.k;
  for (std::size_t a = 0; a < d; ++a) {
    blocks[a + 1] = ek[a];
    blocks[(a + 1) * k] = -ek[a];
  }
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = a; b < d; ++b) {
      Var v = -cwise_mul(s.e[a], ek[b]);
      if (a == b) v = v + scale(s.k, s.il2[a]);
      blocks[(a + 1) * k + (b + 1)] = v;
      blocks[(b + 1) * k + (a + 1)] = v;
    }
  }
  return blocks;
}

Var ones(Tape& t, Index r, Index c) { return t.constant(Matrix::Ones(r, c)); }

}  // namespace

Coords columns(const Var& x) {
  Coords out;
  for (Index a = 0; a < x.cols(); ++a) out.push_back(col(x, a));
  return out;
}

Coords constant_columns(Tape& t, const Eigen::MatrixXd& x) {
  Coords out;
  for (Index a = 0; a < x.cols(); ++a) out.push_back(t.constant(Matrix(x.col(a))));
  return out;
}

Coords gather(const Coords& c, const IndexList& rows) {
  Coords out;
  for (const auto& v : c) out.push_back(gather_rows(v, rows));
  return out;
}

Var element(const Var& v, Index a) { return strided(v, a, 1, 1); }

Var broadcast(const Var& s, Index n) { return matmul(ones(*s.tape(), n, 1), s); }

Var se_gram(const SEVars& p, const Coords& xl, const Coords& xr) {
  return se_parts(p, xl, xr).k;
}

Var se_grad_gram(const SEVars& p, const Coords& xl, const Coords& xr) {
  SEParts s = se_parts(p, xl, xr);
  return interleave(se_grad_blocks(s), static_cast<Index>(xl.size()) + 1);
}

Var layer_gram(const LayerVars& p, const Coords& xl, const Var& fl, const Coords& xr,
               const Var& fr) {
  Var k1 = se_gram(p.gx, xl, xr);
  Var kf = se_gram(p.gf, Coords{fl}, Coords{fr});
  return cwise_mul(k1, kf) + se_gram(p.gamma, xl, xr);
}

Var layer_grad_gram(const LayerVars& p, const Coords& xl, const Var& fl, const Coords& gl,
                    const Coords& xr, const Var& fr, const Coords& gr) {
  const std::size_t d = xl.size();
  if (gl.size() != d || gr.size() != d)
    throw InvalidArgument("layer gram: gradient coordinate count mismatch");
  const std::size_t k = d + 1;
  SEParts sx = se_parts(p.gx, xl, xr);
  std::vector<Var> bx = se_grad_blocks(sx);
  std::vector<Var> bg = se_grad_blocks(se_parts(p.gamma, xl, xr));
  SEParts sf = se_parts(p.gf, Coords{fl}, Coords{fr});
  const Var& kf = sf.k;
  const Var& ef = sf.e[0];

  // Chain rule through f(x): derivatives of k_gf(f(x_l), f(x_r)).
  Var efk = cwise_mul(ef, kf);
  Var h = cwise_mul(add_scalar(-square(ef), sf.il2[0]), kf);
  std::vector<Var> dpf(d), dqf(d);
  for (std::size_t a = 0; a < d; ++a) {
    dpf[a] = -scale_rows(efk, gl[a]);
    dqf[a] = scale_cols(efk, gr[a]);
  }
  const Var& k1 = bx[0];

  std::vector<Var> blocks(k * k);
  blocks[0] = cwise_mul(k1, kf) + bg[0];
  for (std::size_t b = 1; b < k; ++b) {
    blocks[b] = cwise_mul(bx[b], kf) + cwise_mul(k1, dqf[b - 1]) + bg[b];
    blocks[b * k] = cwise_mul(bx[b * k], kf) + cwise_mul(k1, dpf[b - 1]) + bg[b * k];
  }
  Var k1h = cwise_mul(k1, h);
  for (std::size_t a = 1; a < k; ++a) {
    Var rows_scaled = scale_rows(k1h, gl[a - 1]);
    for (std::size_t b = 1; b < k; ++b) {
      blocks[a * k + b] = cwise_mul(bx[a * k + b], kf) + cwise_mul(bx[a * k], dqf[b - 1]) +
                          cwise_mul(bx[b], dpf[a - 1]) + scale_cols(rows_scaled, gr[b - 1]) +
                          bg[a * k + b];
    }
  }
  return interleave(blocks, static_cast<Index>(k));
}

Var se_diag(const SEVars& p, const Var& kernel_noise, Index n) {
  return broadcast(p.variance + kernel_noise, n);
}

Var se_grad_diag(const SEVars& p, const Var& kernel_noise, Index n) {
  Tape& t = *p.variance.tape();
  const Index d = p.lengthscales.rows();
  Var il2 = reciprocal(square(p.lengthscales));
  Var one_point = vcat({p.variance, scale(il2, p.variance)}) + broadcast(kernel_noise, d + 1);
  return reshape(matmul(one_point, ones(t, 1, n)), n * (d + 1), 1);
}

Var layer_diag(const LayerVars& p, Index n) {
  Var c0 = cwise_mul(p.gx.variance, p.gf.variance) + p.gamma.variance + p.kernel_noise;
  return broadcast(c0, n);
}

Var layer_grad_diag(const LayerVars& p, const Coords& g) {
  const Index d = static_cast<Index>(g.size());
  if (d == 0) throw InvalidArgument("layer diag: no gradient coordinates");
  const Index n = g[0].rows();
  Var prod = cwise_mul(p.gx.variance, p.gf.variance);
  Var c0 = prod + p.gamma.variance + p.kernel_noise;
  Var ilx = reciprocal(square(p.gx.lengthscales));
  Var ilg = reciprocal(square(p.gamma.lengthscales));
  Var ilf = reciprocal(square(p.gf.lengthscales));
  Var cg = scale(ilx, prod) + scale(ilg, p.gamma.variance);  // d x 1
  Var sf = cwise_mul(prod, ilf);
  std::vector<Var> parts;
  parts.push_back(broadcast(c0, n));
  for (Index a = 0; a < d; ++a) {
    Var base = element(cg, a) + p.kernel_noise;
    parts.push_back(add_scalar(scale(square(g[a]), sf), base));
  }
  return interleave_rows(parts);
}

}  // namespace mfgp::grams
