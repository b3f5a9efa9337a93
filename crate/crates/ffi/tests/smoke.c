#include <stdio.h>
#include <string.h>

#include "skydive.h"

static const char *SCENARIO =
    "name = \"c-smoke\"\n"
    "start = [0.0, 0.0]\n"
    "target = [150.0, 0.0]\n"
    "corridor_half_width = 10.0\n"
    "t_la = 2.25\n"
    "timeout = 1.0\n"
    "capture_radius = 2.0\n"
    "pattern_set = \"arms-legs\"\n"
    "speed_profile = { cruise = 2.5, accel = 0.1, approach = 0.5 }\n"
    "input = { source = \"external\" }\n";

int main(void) {
    SkydiveSim *sim = NULL;
    char err[256];
    if (skydive_sim_new(NULL, SCENARIO, &sim) != SKYDIVE_STATUS_OK) {
        skydive_last_error(err, sizeof err);
        fprintf(stderr, "new: %s\n", err);
        return 1;
    }
    SkydiveFrame f;
    int ticks = 0;
    skydive_sim_set_input(sim, 0.1, 0.0);
    while (skydive_sim_tick(sim, &f) == SKYDIVE_STATUS_OK) {
        skydive_sim_set_input(sim, 0.1, 0.0);
        ticks++;
    }
    SkydiveOutcome outcome;
    skydive_sim_outcome(sim, &outcome);
    skydive_sim_free(sim);
    if (skydive_sim_tick(NULL, &f) != SKYDIVE_STATUS_NULL_POINTER) return 2;
    skydive_last_error(err, sizeof err);
    if (strstr(err, "null") == NULL) return 3;
    printf("%s ticks=%d outcome=%d u_exec=%.3f\n", skydive_version(), ticks, (int)outcome, f.u_exec[0]);
    return ticks == 240 && outcome == SKYDIVE_OUTCOME_TIMEOUT ? 0 : 4;
}
