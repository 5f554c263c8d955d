#pragma once

#include "profgan/calendar.hpp"
#include "profgan/core_data.hpp"
#include "profgan/gan.hpp"
#include "profgan/metrics.hpp"
#include "profgan/nn.hpp"
#include "profgan/outage.hpp"
#include "profgan/store.hpp"
#include "profgan/synthesis.hpp"
#include "profgan/synthetic.hpp"
