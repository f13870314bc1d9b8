#pragma once

// Umbrella header for the debate engine, both experiment harnesses, the
// particle-counting oracle, and the reporting plumbing.

#include "duet/backend.hpp"
#include "duet/chat.hpp"
#include "duet/config.hpp"
#include "duet/debate.hpp"
#include "duet/error.hpp"
#include "duet/exp1.hpp"
#include "duet/exp2.hpp"
#include "duet/http_backend.hpp"
#include "duet/particle/analyze.hpp"
#include "duet/particle/image.hpp"
#include "duet/particle/image_io.hpp"
#include "duet/particle/label.hpp"
#include "duet/particle/threshold.hpp"
#include "duet/prompts.hpp"
#include "duet/report.hpp"
#include "duet/runner.hpp"
#include "duet/serialize.hpp"
#include "duet/table.hpp"
