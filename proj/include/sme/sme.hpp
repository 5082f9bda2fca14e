#pragma once

#include "sme/codec.hpp"
#include "sme/config.hpp"
#include "sme/dataset.hpp"
#include "sme/environment.hpp"
#include "sme/evaluation.hpp"
#include "sme/io.hpp"
#include "sme/kernel.hpp"
#include "sme/linalg.hpp"
#include "sme/policy.hpp"
#include "sme/random.hpp"
#include "sme/reward.hpp"
#include "sme/stats.hpp"
#include "sme/verification.hpp"
