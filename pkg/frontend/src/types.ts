/** Wire types mirroring the service's JSON contract (snake_case fields). */

export interface AnnotationRecord {
  image_id: string;
  specialty: string;
  class_name: string;
  sub_class: string;
  keywords: string[];
  physician_id: string;
  created_at: string;
}

export interface QueryResult {
  image_id: string;
  distance: number;
  accepted: boolean;
  annotations: AnnotationRecord[];
}

export interface KeywordVote {
  keyword: string;
  score: number;
  supporters: string[];
}

export interface QueryResponse {
  results: QueryResult[];
  votes: KeywordVote[];
}

export interface UploadResponse {
  image_id: string;
  point_count: number;
  duplicate_of?: string;
}

export interface ClassNode {
  name: string;
  sub_classes: string[];
}

export interface SpecialtyNode {
  name: string;
  classes: ClassNode[];
}

export interface ApiError {
  code: string;
  message: string;
}

export interface QueryRequest {
  image_id: string;
  specialty: string;
  class_name?: string;
  sub_class?: string;
  variant?: "mh" | "h";
  top_k?: number;
  threshold?: number;
}

export interface AnnotateRequest {
  image_id: string;
  selected_image_id: string;
  physician_id: string;
  keywords?: string[];
}
