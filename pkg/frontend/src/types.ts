// JSON shapes returned by the recommender service (api: 1).

export interface SessionResponse {
  api: number;
  session_id: string;
}

export interface NamedItem {
  catalog_id: number;
  title: string;
}

export interface ScoredItem extends NamedItem {
  score: number;
}

export interface QueryItem {
  item_id: number;
  title: string;
}

export interface Trace {
  query_items: QueryItem[];
  cold_start: boolean;
  raw_retrieval: ScoredItem[];
  reflected_retrieval: NamedItem[];
  raw_recs: NamedItem[];
  rerank_scores: Record<string, number>;
  final_recs: NamedItem[];
  llm_calls: number;
  warnings: string[];
}

export interface MessageResponse {
  api: number;
  session_id: string;
  recommendations: string[];
  trace?: Trace;
}

export interface UiMessage {
  role: "user" | "system";
  text: string;
  timestamp: number;
}
