from .ranking import (
    REPORT_RANKS,
    RankingResult,
    average_precision,
    distance_matrix,
    evaluate_protocol,
    format_ranking_report,
    per_query_ap_table,
)
from .evaluation import evaluate_model, extract_embeddings
