#pragma once

// Umbrella header. Pulls in everything except the HTTP adapter (include backend_factory.hpp or
// http_backend.hpp for that; they drag in cpp-httplib).

#include "conceptforge/adaptive_negatives.hpp"
#include "conceptforge/artifact_store.hpp"
#include "conceptforge/backend.hpp"
#include "conceptforge/config.hpp"
#include "conceptforge/constraints.hpp"
#include "conceptforge/evaluation.hpp"
#include "conceptforge/evolution.hpp"
#include "conceptforge/image_io.hpp"
#include "conceptforge/loss.hpp"
#include "conceptforge/render.hpp"
#include "conceptforge/scripted_vqa.hpp"
#include "conceptforge/stub_backend.hpp"
#include "conceptforge/templates.hpp"
#include "conceptforge/trainer.hpp"
