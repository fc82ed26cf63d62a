#pragma once

#include "json.hpp"
#include "opsys/factorize.hpp"
#include "opsys/tensor.hpp"

// JSON serialization of every on-disk artifact. All matrices are row-major
// arrays of [re, im] pairs; files round-trip bit-exactly (shortest round-trip
// double printing).

namespace opsys {

using Json = nlohmann::ordered_json;

struct MalformedCertificateError : std::runtime_error {
  explicit MalformedCertificateError(const std::string& w) : std::runtime_error(w) {}
};

Json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const Json& j, int rows, int cols);

// {"ambient_dim": d, "generators": [matrix...]}
Json system_to_json(const SystemPtr& s);
SystemPtr system_from_json(const Json& j);

// {"factors": [system, system], "level": n, "coeffs": [matrix...]}
Json element_to_json(const TensorSystem& ts, const LevelElement& x);
std::pair<TensorSystem, LevelElement> element_from_json(const Json& j);

// {"domain": system|{"full": p}, "codomain": system|{"full": q}, "action": matrix}
Json map_to_json(const SystemMap& m);
SystemMap map_from_json(const Json& j);

// {"kind": "member"|"refute"|"fail", "epsilon", "residual", "atoms": [...],
//  "levels", "seed", "tool_version", ...}
Json certificate_to_json(const TensorSystem& ts, const MaxDecomposition& d, bool success);
Json refutation_to_json(const RefutationEvidence& ev);

struct VerifyReport {
  bool valid = false;
  std::string kind;
  double stored_residual = 0.0;
  double recomputed_residual = 0.0;
  std::string reason;
};

/// One-pass re-verification of a certificate file against an element file:
/// atom cone membership, atom positivity, reconstruction residual, margins.
VerifyReport verify_certificate_json(const Json& certificate, const Json& element);

Json load_json_file(const std::string& path);
void write_json_file(const std::string& path, const Json& j);

extern const char* kToolVersion;

}  // namespace opsys
