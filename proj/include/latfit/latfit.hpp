#pragma once

#include "latfit/checks.hpp"
#include "latfit/configuration.hpp"
#include "latfit/fields.hpp"
#include "latfit/fitting.hpp"
#include "latfit/generators.hpp"
#include "latfit/io.hpp"
#include "latfit/linalg.hpp"
#include "latfit/model.hpp"
#include "latfit/parallel.hpp"
#include "latfit/params.hpp"
#include "latfit/potentials.hpp"
#include "latfit/reparam.hpp"
#include "latfit/topology.hpp"
