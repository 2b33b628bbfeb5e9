#pragma once

#include "llmaudit/attribution.hpp"
#include "llmaudit/baseline.hpp"
#include "llmaudit/checks.hpp"
#include "llmaudit/config.hpp"
#include "llmaudit/csv.hpp"
#include "llmaudit/digest.hpp"
#include "llmaudit/errors.hpp"
#include "llmaudit/keyvalue.hpp"
#include "llmaudit/metrics.hpp"
#include "llmaudit/pipeline.hpp"
#include "llmaudit/predictor.hpp"
#include "llmaudit/promptgen.hpp"
#include "llmaudit/random.hpp"
#include "llmaudit/remote.hpp"
#include "llmaudit/selfexpl.hpp"
#include "llmaudit/shap_io.hpp"
#include "llmaudit/synthetic.hpp"
#include "llmaudit/tabular.hpp"
#include "llmaudit/text.hpp"
