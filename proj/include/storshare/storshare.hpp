// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "storshare/coalition.hpp"
#include "storshare/common.hpp"
#include "storshare/conditional.hpp"
#include "storshare/demand_model.hpp"
#include "storshare/distribution.hpp"
#include "storshare/ingest.hpp"
#include "storshare/marketsim.hpp"
#include "storshare/parallel.hpp"
#include "storshare/sharing.hpp"
#include "storshare/standalone.hpp"
#include "storshare/tariff.hpp"
