#ifndef GONBA_GONBA_HPP
#define GONBA_GONBA_HPP

#include "gonba/common.hpp"
#include "gonba/event_log.hpp"
#include "gonba/dfg.hpp"
#include "gonba/nn.hpp"
#include "gonba/kpi_model.hpp"
#include "gonba/rl_env.hpp"
#include "gonba/agents.hpp"
#include "gonba/eval.hpp"
#include "gonba/config.hpp"
#include "gonba/pipeline.hpp"
#include "gonba/synthetic.hpp"

#endif  // GONBA_GONBA_HPP
