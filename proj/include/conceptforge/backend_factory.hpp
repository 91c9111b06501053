#pragma once

#include "conceptforge/config.hpp"
#include "conceptforge/http_backend.hpp"
#include "conceptforge/stub_backend.hpp"

namespace conceptforge {

/// Builds the backend family a run config selects. Stub templates are extended with the prompts
/// the run will render so their geometry stays orthogonal.
inline Backends make_backends(const RunConfig& config) {
    if (config.backend.kind == BackendKind::real) return make_http_backends(config.backend.real);
    StubConfig stub = config.backend.stub;
    stub.templates = stub_templates_for(config);
    return make_stub_backends(std::move(stub));
}

} // namespace conceptforge
