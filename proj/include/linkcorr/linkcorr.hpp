#pragma once

#include "agreement.hpp"
#include "assignment.hpp"
#include "bias_correction.hpp"
#include "config.hpp"
#include "em.hpp"
#include "error.hpp"
#include "estimators.hpp"
#include "fixtures/hormone.hpp"
#include "ledger.hpp"
#include "linking.hpp"
#include "match_model.hpp"
#include "parallel.hpp"
#include "pipeline.hpp"
#include "report.hpp"
#include "resampling.hpp"
#include "rng.hpp"
#include "stopping_test.hpp"
#include "table.hpp"
