#pragma once

#include "tabfids/adam.hpp"
#include "tabfids/checkpoint.hpp"
#include "tabfids/config.hpp"
#include "tabfids/data.hpp"
#include "tabfids/ddfe.hpp"
#include "tabfids/error.hpp"
#include "tabfids/fed.hpp"
#include "tabfids/matrix.hpp"
#include "tabfids/metrics.hpp"
#include "tabfids/model.hpp"
#include "tabfids/network.hpp"
#include "tabfids/pipeline.hpp"
#include "tabfids/preprocess.hpp"
#include "tabfids/rng.hpp"
#include "tabfids/synthetic.hpp"
#include "tabfids/transfer.hpp"
