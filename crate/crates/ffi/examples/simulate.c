#include <stdio.h>
#include <stdlib.h>
#include "chbc.h"

int main(void) {
    ChbcProblem *p = NULL;
    if (chbc_problem_default(&p) != CHBC_STATUS_OK) {
        fprintf(stderr, "%s\n", chbc_last_error_message());
        return 1;
    }
    size_t nb, ng, levels;
    chbc_problem_dims(p, &nb, &ng, &levels);
    double *grad = malloc(sizeof(double) * ng * levels);
    double cost = 0.0;
    if (chbc_gradient(p, NULL, &cost, grad) != CHBC_STATUS_OK) {
        fprintf(stderr, "%s\n", chbc_last_error_message());
        return 1;
    }
    printf("bulk %zu boundary %zu levels %zu cost %.6e\n", nb, ng, levels, cost);
    free(grad);
    chbc_problem_free(p);
    return 0;
}
