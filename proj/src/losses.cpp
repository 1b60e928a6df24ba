#include "bpfa/attacks.hpp"
#include "bpfa/error.hpp"

namespace bpfa {

std::string_view to_string(AttackMode mode) {
  return mode == AttackMode::Impersonation ? "impersonation" : "dodging";
}

AttackMode parse_attack_mode(std::string_view text) {
  if (text == "impersonation") return AttackMode::Impersonation;
  if (text == "dodging") return AttackMode::Dodging;
  fail(ErrorKind::Config, "unknown attack mode '" + std::string(text) + "'");
}

LossValue loss_impersonation(const Tensor& net_out, const Tensor& target_emb) {
  require_same_shape(net_out, target_emb, "loss_impersonation");
  const double norm = l2_norm(net_out);
  if (!(norm > 0.0)) fail(ErrorKind::Numeric, "loss: zero-norm embedding");
  const Tensor u = scale(net_out, 1.0 / norm);
  const Tensor v = l2_normalize(target_emb);

  LossValue out;
  Tensor diff = sub(u, v);
  out.value = dot(diff, diff);
  // d/de || e/|e| - v ||^2 = (I - u u^T) 2 (u - v) / |e|
  const double radial = 2.0 * dot(u, diff);
  out.grad = Tensor(net_out.shape());
  for (std::size_t i = 0; i < u.size(); ++i) {
    out.grad[i] = (2.0 * diff[i] - radial * u[i]) / norm;
  }
  check_finite(out.grad, "loss gradient");
  return out;
}

LossValue loss_dodging(const Tensor& net_out, const Tensor& source_emb) {
  LossValue out = loss_impersonation(net_out, source_emb);
  out.value = -out.value;
  for (double& g : out.grad.data()) g = -g;
  return out;
}

LossValue attack_loss(AttackMode mode, const Tensor& net_out, const Tensor& ref_emb) {
  return mode == AttackMode::Impersonation ? loss_impersonation(net_out, ref_emb)
                                           : loss_dodging(net_out, ref_emb);
}

}  // namespace bpfa
