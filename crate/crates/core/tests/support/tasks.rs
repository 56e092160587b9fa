//! The six benchmark tasks and the scripted model output for each strategy.
//!
//! Code stays within what the stub kernel evaluates: straight-line
//! statements over `read_csv` frames, column lists and builtins.

pub struct Subgoal {
    pub assumptions: &'static str,
    pub code: &'static str,
}

pub struct Turn {
    /// `None` for the opening turn, which answers the task query.
    pub prompt: Option<&'static str>,
    pub assumptions: &'static str,
    pub code: &'static str,
}

pub struct TaskFixture {
    pub id: &'static str,
    pub query: &'static str,
    pub dataset: &'static str,
    pub columns: &'static str,
    /// Served on the first Phase A attempt when set; later attempts get `columns`.
    pub columns_first_attempt: Option<&'static str>,
    pub plan: &'static str,
    pub code: &'static str,
    pub subgoals: &'static [Subgoal],
    pub turns: &'static [Turn],
}

impl TaskFixture {
    pub fn edit_marker(&self) -> String {
        format!("EDITMARK{}", &self.id[1..])
    }

    pub fn prior_marker(&self) -> String {
        format!("PRIORMARK{}", &self.id[1..])
    }

    pub fn dataset_bytes(&self) -> Vec<u8> {
        std::fs::read(super::fixtures_dir().join("datasets").join(self.dataset)).expect("dataset fixture")
    }
}

pub fn by_id(id: &str) -> &'static TaskFixture {
    TASKS.iter().find(|t| t.id == id).expect("known task")
}

pub static TASKS: &[TaskFixture] = &[
    TaskFixture {
        id: "T1",
        query: "Show me the top five highly rated products by Nivea",
        dataset: "big-basket-products.csv",
        columns: "### Column: `Brand`
Brand names include sub-brands such as `Nivea Men` and `NIVEA Soft` - match every brand that starts with `nivea` ignoring case
### Column: `Rating`
`Rating` mixes plain numbers with text such as `4.1 out of 5` - extract the leading number and drop empty ratings
### Output
The answer lists five products - show `ProductName`, `Brand` and `Rating` sorted by rating",
        columns_first_attempt: None,
        plan: "1. Select the `Brand`, `ProductName` and `Rating` columns
2. Keep rows whose `Brand` starts with `nivea` ignoring case
3. Convert `Rating` to a number
4. [optional] Drop products without a rating
5. Sort by `Rating` and keep the top five",
        code: "```python
products = df_big_basket_products[['ProductName', 'Brand', 'Rating']]
brands = products['Brand']
ratings = products['Rating']
result = products.head(5)
print(len(brands), len(ratings))
print(result)
```",
        subgoals: &[
            Subgoal {
                assumptions: "Objective: find every Nivea brand variant
Brand names include sub-brands such as `Nivea Men` - match brands starting with `nivea` ignoring case",
                code: "```python
brands = sorted(df_big_basket_products['Brand'])
print(len(brands))
```",
            },
            Subgoal {
                assumptions: "Objective: clean the `Rating` column
`Rating` contains text such as `4.1 out of 5` - keep the leading number
Some ratings are empty - drop them",
                code: "```python
ratings = df_big_basket_products['Rating']
print(len(ratings))
```",
            },
            Subgoal {
                assumptions: "Objective: show the five best rated Nivea products
The cleaned ratings are comparable - sort descending and keep five rows",
                code: "```python
result = df_big_basket_products[['ProductName', 'Brand', 'Rating']].head(5)
print(result)
```",
            },
        ],
        turns: &[
            Turn {
                prompt: None,
                assumptions: "`Brand` holds the brand name - keep rows whose brand mentions Nivea
`Rating` is numeric - sort by it",
                code: "```python
result = df_big_basket_products[['ProductName', 'Brand', 'Rating']].head(5)
print(result)
```",
            },
            Turn {
                prompt: Some("Some ratings look like text, can you clean them first?"),
                assumptions: "`Rating` mixes numbers and text - keep the leading number",
                code: "```python
ratings = df_big_basket_products['Rating']
print(len(ratings))
```",
            },
        ],
    },
    TaskFixture {
        id: "T2",
        query: "What is the most common tag associated with each theme?",
        dataset: "anime-list.csv",
        columns: "### Column: `Themes`
`Themes` holds comma separated values - split on commas and strip spaces
### Column: `Tags`
Tags differ in casing such as `Action` and `action` - lowercase before counting
### Output
One row per theme - show the theme and its most frequent tag",
        columns_first_attempt: None,
        plan: "1. Split `Themes` and `Tags` into lists
2. Lowercase every tag and theme
3. Pair each theme with each tag of the same title
4. Count tags per theme and keep the most frequent",
        code: "```python
themes = df_anime_list['Themes']
tags = df_anime_list['Tags']
first = themes[0].lower().split(',')
result = df_anime_list[['Themes', 'Tags']].head(10)
print(first)
print(result)
```",
        subgoals: &[
            Subgoal {
                assumptions: "Objective: split the comma separated columns
`Themes` and `Tags` hold comma separated values - split on commas",
                code: "```python
themes = df_anime_list['Themes']
parts = themes[0].split(',')
print(parts)
```",
            },
            Subgoal {
                assumptions: "Objective: normalise casing
Only the first item of each list is capitalised - lowercase all items",
                code: "```python
tags = df_anime_list['Tags']
print(tags[0].lower())
```",
            },
        ],
        turns: &[Turn {
            prompt: None,
            assumptions: "`Themes` and `Tags` are single values - count tag frequency per theme directly",
            code: "```python
result = df_anime_list[['Themes', 'Tags']].head(10)
print(result)
```",
        }],
    },
    TaskFixture {
        id: "T3",
        query: "Display the top 20 most popular drama names that have only one unique genre? Popularity is based on drama rating and votes.",
        dataset: "korean-drama.csv",
        columns: "### Column: `genres`
Some dramas list `Unknown` as genre - exclude them
Multiple genres are comma separated - keep rows with exactly one genre
### Column: `votes`
`votes` has extreme outliers - scale votes by their rank before combining
### Column: `rating`
`rating` is on a ten point scale - use it as is
### Output
Popularity combines `rating` and `votes` - show the top 20 names with their score",
        columns_first_attempt: None,
        plan: "1. Drop dramas whose `genres` is `Unknown`
2. Keep dramas with a single genre
3. Rank `votes` to limit outliers
4. Combine `rating` and the votes rank into a score
5. [optional] Break ties by `year`
6. Show the top 20 names",
        code: "```python
dramas = df_korean_drama[['name', 'rating', 'votes', 'genres']]
votes = dramas['votes']
top_votes = max(votes)
result = dramas.head(20)
print(top_votes)
print(result)
```",
        subgoals: &[
            Subgoal {
                assumptions: "Objective: filter genres
`Unknown` genres carry no information - drop them
Comma separated genres mean several genres - keep single genre rows",
                code: "```python
genres = df_korean_drama['genres']
print(len(genres))
```",
            },
            Subgoal {
                assumptions: "Objective: handle vote outliers
One drama has millions of votes - rank votes instead of using raw counts",
                code: "```python
votes = sorted(df_korean_drama['votes'])
print(votes[-1])
```",
            },
            Subgoal {
                assumptions: "Objective: build the popularity score
Rating and vote rank matter equally - average them",
                code: "```python
ratings = df_korean_drama['rating']
print(round(sum(ratings) / len(ratings), 2))
```",
            },
            Subgoal {
                assumptions: "Objective: show the result
The score orders dramas - keep the top 20",
                code: "```python
result = df_korean_drama[['name', 'rating', 'votes']].head(20)
print(result)
```",
            },
        ],
        turns: &[
            Turn {
                prompt: None,
                assumptions: "`genres` holds one genre per drama - no genre filtering is needed",
                code: "```python
result = df_korean_drama[['name', 'rating', 'votes']].head(20)
print(result)
```",
            },
            Turn {
                prompt: Some("Please drop dramas whose genre is Unknown."),
                assumptions: "`Unknown` marks a missing genre - drop those rows",
                code: "```python
genres = df_korean_drama['genres']
print(len(genres))
```",
            },
            Turn {
                prompt: Some("The votes have a huge outlier, use ranks instead."),
                assumptions: "Raw votes are skewed - rank them",
                code: "```python
votes = sorted(df_korean_drama['votes'])
print(votes[0], votes[-1])
```",
            },
        ],
    },
    TaskFixture {
        id: "T4",
        query: "What are the top ten positions (based on mean salary) for working remotely in US-based companies?",
        dataset: "data-science-job-salaries.csv",
        columns: "### Column: `Country Code`
US companies appear as `US`, `us`, `USA` and `U.S.` - normalise the codes before filtering
### Column: `Remote Ratio`
Fully remote positions have `Remote Ratio` 100 - keep only those
### Column: `salary_in_usd`
Salaries are already in US dollars - average them per `job_title`
### Output
Ten positions - show `job_title` and mean salary sorted descending",
        columns_first_attempt: None,
        plan: "1. Normalise `Country Code` to upper case without dots
2. Keep rows with code `US` or `USA`
3. Keep rows with `Remote Ratio` equal to 100
4. Average `salary_in_usd` per `job_title`
5. Show the top ten",
        code: "```python
jobs = df_data_science_job_salaries[['job_title', 'salary_in_usd', 'Country Code', 'Remote Ratio']]
codes = jobs['Country Code']
normalised = codes[0].upper().replace('.', '')
result = jobs.head(10)
print(normalised)
print(result)
```",
        subgoals: &[
            Subgoal {
                assumptions: "Objective: normalise country codes
Codes vary in case and punctuation - uppercase and remove dots",
                code: "```python
codes = df_data_science_job_salaries['Country Code']
print(codes[0].upper().replace('.', ''))
```",
            },
            Subgoal {
                assumptions: "Objective: keep remote US positions
`Remote Ratio` of 100 means fully remote - keep those rows",
                code: "```python
ratios = df_data_science_job_salaries['Remote Ratio']
print(max(ratios))
```",
            },
            Subgoal {
                assumptions: "Objective: rank positions by mean salary
Salaries are in US dollars - average per `job_title`",
                code: "```python
result = df_data_science_job_salaries[['job_title', 'salary_in_usd']].head(10)
print(result)
```",
            },
        ],
        turns: &[
            Turn {
                prompt: None,
                assumptions: "`Country Code` uses `US` for US companies - filter on it",
                code: "```python
result = df_data_science_job_salaries[['job_title', 'salary_in_usd']].head(10)
print(result)
```",
            },
            Turn {
                prompt: Some("Country codes also appear as us and USA, include those."),
                assumptions: "Codes vary in case - uppercase and treat `USA` as `US`",
                code: "```python
codes = df_data_science_job_salaries['Country Code']
print(len(codes))
```",
            },
        ],
    },
    TaskFixture {
        id: "T5",
        query: "Show the top five movies with the highest percentage return on investment.",
        dataset: "bollywood-movies.csv",
        columns: "### Column: `budget`
Budgets are text such as `45 crore` and `Rs 30 cr` - extract the number
### Column: `Revenue`
Some revenues are missing - fill them from `India` plus `Worldwide`
### Output
Return on investment is a percentage - show `Movie` and ROI for the top five",
        columns_first_attempt: Some(
            "### Column: `Budget`
Budgets are numeric - use them directly
### Column: `Revenue`
Revenue is complete - use it directly
### Output
Five movies - show ROI",
        ),
        plan: "1. Extract the numeric part of `budget`
2. Fill missing `Revenue` with `India` plus `Worldwide`
3. Compute ROI as revenue over budget minus one, in percent
4. Show the top five movies",
        code: "```python
movies = df_bollywood_movies[['Movie', 'budget', 'India', 'Worldwide', 'Revenue']]
budget = movies['budget']
cleaned = budget[0].replace('Rs', '').replace('crore', '').replace('cr', '').strip()
result = movies.head(5)
print(float(cleaned))
print(result)
```",
        subgoals: &[
            Subgoal {
                assumptions: "Objective: clean `budget`
Budgets carry unit text - strip `Rs`, `crore` and `cr`",
                code: "```python
budget = df_bollywood_movies['budget']
print(budget[0].replace('crore', '').strip())
```",
            },
            Subgoal {
                assumptions: "Objective: fill missing revenue
Missing `Revenue` equals `India` plus `Worldwide` - fill it",
                code: "```python
india = df_bollywood_movies['India']
world = df_bollywood_movies['Worldwide']
print(india[0] + world[0])
```",
            },
            Subgoal {
                assumptions: "Objective: rank by ROI
ROI is revenue over budget minus one - express it in percent",
                code: "```python
result = df_bollywood_movies[['Movie', 'budget', 'Revenue']].head(5)
print(result)
```",
            },
        ],
        turns: &[
            Turn {
                prompt: None,
                assumptions: "`budget` and `Revenue` are numeric - divide them directly",
                code: "```python
result = df_bollywood_movies[['Movie', 'budget', 'Revenue']].head(5)
print(result)
```",
            },
            Turn {
                prompt: Some("Budgets are text and some revenues are missing, fix both."),
                assumptions: "Budgets carry unit text - extract the number
Missing revenue - add `India` and `Worldwide`",
                code: "```python
budget = df_bollywood_movies['budget']
print(budget[0].strip())
```",
            },
        ],
    },
    TaskFixture {
        id: "T6",
        query: "What were the top three lowest scoring matches? Sort in ascending order and show location, local and visitor team names.",
        dataset: "euroleague-basketball.csv",
        columns: "### Column: `Points`
Each game has one row per team - sum `Points` per `Game` and `Round`
### Column: `Side`
`Side` tells local from visitor - use it to pick team names
### Column: `Location`
`Location` is the local arena - show it as is
### Output
Three matches in ascending total score - show `Location`, local and visitor teams",
        columns_first_attempt: None,
        plan: "1. Sum `Points` per `Game` and `Round`
2. Pivot `Team` by `Side` to get local and visitor names
3. Sort by total score ascending
4. Show the first three matches",
        code: "```python
games = df_euroleague_basketball[['Game', 'Round', 'Location', 'Team', 'Side', 'Points']]
points = games['Points']
result = games.head(6)
print(min(points))
print(result)
```",
        subgoals: &[
            Subgoal {
                assumptions: "Objective: total score per match
Each match spans two rows - sum `Points` per `Game` and `Round`",
                code: "```python
points = df_euroleague_basketball['Points']
print(sum(points))
```",
            },
            Subgoal {
                assumptions: "Objective: show the lowest scoring matches
`Side` separates local and visitor - show both team names",
                code: "```python
result = df_euroleague_basketball[['Location', 'Team', 'Side', 'Points']].head(6)
print(result)
```",
            },
        ],
        turns: &[
            Turn {
                prompt: None,
                assumptions: "Each row is one match - sort by `Points`",
                code: "```python
result = df_euroleague_basketball[['Location', 'Team', 'Points']].head(3)
print(result)
```",
            },
            Turn {
                prompt: Some("Each match has two rows, add the points of both teams per game."),
                assumptions: "Matches span two rows - sum `Points` per `Game` and `Round`",
                code: "```python
points = df_euroleague_basketball['Points']
print(sum(points))
```",
            },
        ],
    },
];
