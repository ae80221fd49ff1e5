#include "manifold_calib/kinematics.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "manifold_calib/error.hpp"

namespace manifold_calib {

namespace {

struct RowTerms {
  double ct, st, ca, sa;
};

RowTerms row_terms(const DHRow& row, double q, double b) {
  const double theta = (q - b + row.theta_offset) * kDegToRad;
  const double alpha = row.alpha_twist * kDegToRad;
  return {std::cos(theta), std::sin(theta), std::cos(alpha), std::sin(alpha)};
}

Mat4 dh_matrix(const RowTerms& t, double a, double d) {
  Mat4 m;
  m << t.ct, -t.st * t.ca, t.st * t.sa, a * t.ct,
       t.st, t.ct * t.ca, -t.ct * t.sa, a * t.st,
       0.0, t.sa, t.ca, d,
       0.0, 0.0, 0.0, 1.0;
  return m;
}

// d(A)/d(theta) per radian.
Mat4 dh_dtheta(const RowTerms& t, double a) {
  Mat4 m = Mat4::Zero();
  m.row(0) << -t.st, -t.ct * t.ca, t.ct * t.sa, -a * t.st;
  m.row(1) << t.ct, -t.st * t.ca, t.st * t.sa, a * t.ct;
  return m;
}

// d(A)/d(r): only the translation column depends on the strain.
Mat4 dh_dstrain(const RowTerms& t, double a0, double d0) {
  Mat4 m = Mat4::Zero();
  m(0, 3) = a0 * t.ct;
  m(1, 3) = a0 * t.st;
  m(2, 3) = d0;
  return m;
}

void check_dims(const KinematicChain& chain, const JointVector& q, const KinematicParams& params) {
  if (static_cast<std::size_t>(q.size()) != chain.size() ||
      static_cast<std::size_t>(params.b.size()) != chain.size()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "chain has " + std::to_string(chain.size()) + " joints, got q of length " +
                    std::to_string(q.size()) + " and b of length " + std::to_string(params.b.size()));
  }
}

double require_number(const nlohmann::json& row, const char* key) {
  const auto it = row.find(key);
  if (it == row.end()) {
    throw Error(ErrorCode::kParseError, std::string("DH row is missing field '") + key + "'");
  }
  if (!it->is_number()) {
    throw Error(ErrorCode::kParseError, std::string("DH field '") + key + "' is not a number");
  }
  return it->get<double>();
}

}  // namespace

KinematicChain::KinematicChain(std::vector<DHRow> rows) : rows_(std::move(rows)) {
  if (rows_.empty()) {
    throw Error(ErrorCode::kValidationError, "kinematic chain needs at least one joint");
  }
  for (const DHRow& r : rows_) {
    if (!std::isfinite(r.a) || !std::isfinite(r.alpha_twist) || !std::isfinite(r.d) ||
        !std::isfinite(r.theta_offset)) {
      throw Error(ErrorCode::kValidationError, "DH row contains a non-finite entry");
    }
  }
}

Eigen::VectorXd KinematicParams::packed() const {
  Eigen::VectorXd theta(b.size() + 1);
  theta[0] = r;
  theta.tail(b.size()) = b;
  return theta;
}

KinematicParams KinematicParams::unpack(const Eigen::VectorXd& theta) {
  return {theta[0], theta.tail(theta.size() - 1)};
}

void KinematicParams::validate(std::size_t n) const {
  if (static_cast<std::size_t>(b.size()) != n) {
    throw Error(ErrorCode::kDimensionMismatch, "bias vector length does not match joint count");
  }
  if (!std::isfinite(r) || std::abs(r) >= 0.5) {
    throw Error(ErrorCode::kValidationError, "strain must be finite with |r| < 0.5");
  }
  for (Eigen::Index i = 0; i < b.size(); ++i) {
    if (!std::isfinite(b[i]) || std::abs(b[i]) >= 45.0) {
      throw Error(ErrorCode::kValidationError, "encoder bias must be finite with |b| < 45 deg");
    }
  }
}

HomTransform forward_kinematics(const KinematicChain& chain, const JointVector& q_measured,
                                const KinematicParams& params) {
  check_dims(chain, q_measured, params);
  const double scale = 1.0 + params.r;
  Mat4 t = Mat4::Identity();
  for (std::size_t i = 0; i < chain.size(); ++i) {
    const DHRow& row = chain.rows()[i];
    const auto k = static_cast<Eigen::Index>(i);
    t = t * dh_matrix(row_terms(row, q_measured[k], params.b[k]), scale * row.a, scale * row.d);
  }
  return HomTransform(t);
}

FkDerivatives forward_kinematics_derivatives(const KinematicChain& chain,
                                             const JointVector& q_measured,
                                             const KinematicParams& params) {
  check_dims(chain, q_measured, params);
  const std::size_t n = chain.size();
  const double scale = 1.0 + params.r;

  std::vector<RowTerms> terms(n);
  std::vector<Mat4> links(n);
  for (std::size_t i = 0; i < n; ++i) {
    const DHRow& row = chain.rows()[i];
    const auto k = static_cast<Eigen::Index>(i);
    terms[i] = row_terms(row, q_measured[k], params.b[k]);
    links[i] = dh_matrix(terms[i], scale * row.a, scale * row.d);
  }

  // prefix[i] = A_0 ... A_{i-1}; suffix[i] = A_{i+1} ... A_{n-1}
  std::vector<Mat4> prefix(n + 1, Mat4::Identity());
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] * links[i];
  std::vector<Mat4> suffix(n, Mat4::Identity());
  for (std::size_t i = n - 1; i > 0; --i) suffix[i - 1] = links[i] * suffix[i];

  FkDerivatives out;
  out.transform = HomTransform(prefix[n]);
  out.d_transform.assign(n + 1, Mat4::Zero());
  for (std::size_t i = 0; i < n; ++i) {
    const DHRow& row = chain.rows()[i];
    out.d_transform[0] += prefix[i] * dh_dstrain(terms[i], row.a, row.d) * suffix[i];
    out.d_transform[i + 1] =
        prefix[i] * dh_dtheta(terms[i], scale * row.a) * suffix[i] * (-kDegToRad);
  }
  return out;
}

FkGradient fk_gradient(const KinematicChain& chain, const JointVector& q_measured,
                       const KinematicParams& params) {
  const FkDerivatives fk = forward_kinematics_derivatives(chain, q_measured, params);
  return {matrix_to_pose(fk.transform), pose_jacobian(fk.transform, fk.d_transform)};
}

KinematicChain parse_chain(const nlohmann::json& config) {
  if (!config.is_object() || !config.contains("rows") || !config["rows"].is_array()) {
    throw Error(ErrorCode::kParseError, "chain config must be an object with a 'rows' array");
  }
  std::vector<DHRow> rows;
  for (const auto& row : config["rows"]) {
    if (!row.is_object()) throw Error(ErrorCode::kParseError, "DH row must be an object");
    rows.push_back({require_number(row, "a"), require_number(row, "alpha"),
                    require_number(row, "d"), require_number(row, "theta")});
  }
  return KinematicChain(std::move(rows));
}

KinematicChain load_chain(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kMissingArtifact, "cannot open chain config " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kParseError, "malformed chain config " + path.string() + ": " + e.what());
  }
  return parse_chain(doc);
}

nlohmann::json chain_to_json(const KinematicChain& chain) {
  nlohmann::json rows = nlohmann::json::array();
  for (const DHRow& r : chain.rows()) {
    rows.push_back({{"a", r.a}, {"alpha", r.alpha_twist}, {"d", r.d}, {"theta", r.theta_offset}});
  }
  return {{"rows", rows}};
}

KinematicChain reference_chain() {
  return KinematicChain({{0.0, -90.0, 360.0, 0.0},
                         {0.0, 90.0, 0.0, 0.0},
                         {0.0, 90.0, 420.0, 0.0},
                         {0.0, -90.0, 0.0, 0.0},
                         {0.0, -90.0, 400.0, 0.0},
                         {0.0, 90.0, 0.0, 0.0},
                         {0.0, 0.0, 126.0, 0.0}});
}

}  // namespace manifold_calib
